/** Thin REST client over the service endpoints. The fetch function is
 * injectable so tests can script the service. */

import type { DocSummary, MeshPayload, MoveOp, MoveResponse } from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ServiceError extends Error {
  constructor(
    public status: number,
    public payload: Record<string, unknown>
  ) {
    super(`service error ${status}: ${JSON.stringify(payload)}`);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init)
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      throw new ServiceError(response.status, payload);
    }
    return payload as T;
  }

  getDoc(): Promise<DocSummary> {
    return this.request("GET", "/doc");
  }

  getTemplate(): Promise<MeshPayload> {
    return this.request("GET", "/template");
  }

  getCage(): Promise<MeshPayload & { selection: number[] }> {
    return this.request("GET", "/cage");
  }

  getAnnotations(): Promise<{ annotations: unknown[] }> {
    return this.request("GET", "/annotations");
  }

  getGraph(): Promise<{ relationships: unknown[] }> {
    return this.request("GET", "/graph");
  }

  selectHandles(vertices: number[], revision?: number) {
    return this.request<{ revision: number; selection: number[] }>(
      "POST",
      "/handles/select",
      { vertices, revision }
    );
  }

  selectByAnnotation(annotation: number, threshold: number) {
    return this.request<{ revision: number; selection: number[] }>(
      "POST",
      "/handles/select",
      { annotation, threshold }
    );
  }

  move(op: MoveOp, revision: number): Promise<MoveResponse> {
    return this.request("POST", "/handles/move", { ...op, revision });
  }

  buildSession() {
    return this.request<{ revision: number }>("POST", "/session", {});
  }

  withdrawSession() {
    return this.request<{ revision: number }>("DELETE", "/session");
  }

  addRelationship(body: Record<string, unknown>) {
    return this.request<{ revision: number }>("POST", "/graph", body);
  }
}
