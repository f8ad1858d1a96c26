/** View state: camera pose, layer toggles, tool, selection, revision.
 *
 * Geometry displayed on screen must always originate from a service
 * response; `applyServerBuffer` is the single mutation path for vertex
 * data and the audit trail records every application for dev builds.
 */

import { decodeVertices } from "./buffers.js";

export type Tool = "camera" | "select" | "deselect" | "move" | "stretch";

export interface LayerToggles {
  templateSurface: boolean;
  templateWireframe: boolean;
  templatePoints: boolean;
  cageWireframe: boolean;
  cagePoints: boolean;
}

/** Defaults: surface-only template, wireframe+points cage. */
export function defaultToggles(): LayerToggles {
  return {
    templateSurface: true,
    templateWireframe: false,
    templatePoints: false,
    cageWireframe: true,
    cagePoints: true,
  };
}

export interface AuditRecord {
  revision: number;
  source: "stream" | "snapshot";
}

export class ViewState {
  tool: Tool = "camera";
  toggles: LayerToggles = defaultToggles();
  selection: number[] = [];
  revision = -1;
  vertices: Float32Array | null = null;
  audit: AuditRecord[] = [];
  private listeners: Array<(state: ViewState) => void> = [];

  onChange(listener: (state: ViewState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this);
  }

  /** Apply a geometry buffer received from the service. Buffers for
   * revisions older than the displayed one are dropped (stale pushes). */
  applyServerBuffer(
    revision: number,
    encoded: string,
    source: "stream" | "snapshot"
  ): boolean {
    if (revision < this.revision) return false;
    this.vertices = decodeVertices(encoded);
    this.revision = revision;
    this.audit.push({ revision, source });
    this.emit();
    return true;
  }

  /** Dev-build audit: every displayed buffer came from the service and
   * revisions never moved backwards. */
  auditPasses(): boolean {
    if (this.vertices !== null && this.audit.length === 0) return false;
    for (let i = 1; i < this.audit.length; i++) {
      if (this.audit[i].revision < this.audit[i - 1].revision) return false;
    }
    return true;
  }

  setSelection(vertices: number[]): void {
    this.selection = [...vertices].sort((a, b) => a - b);
    this.emit();
  }

  setTool(tool: Tool): void {
    this.tool = tool;
    this.emit();
  }

  setToggle(key: keyof LayerToggles, value: boolean): void {
    this.toggles[key] = value;
    this.emit();
  }
}
