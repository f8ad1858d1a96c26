/** Pointer drags to server move requests.
 *
 * Pointer deltas map to world-space translations (camera plane) or a
 * stretch direction; requests are throttled to at most 30 per second
 * with a single request in flight, coalescing the latest pointer state.
 * Responses update the revision; 409s trigger a snapshot refetch. The
 * controller never mutates geometry itself - displayed buffers arrive
 * through the streaming channel.
 */

import type { MoveOp, MoveResponse, ResidualReport } from "./types.js";

export interface MoveService {
  move(op: MoveOp, revision: number): Promise<MoveResponse>;
}

export interface DragOptions {
  maxRequestsPerSecond?: number;
  /** pointer delta (pixels) to world delta on the camera plane */
  toWorld?: (dx: number, dy: number) => [number, number, number];
  now?: () => number;
  onResiduals?: (report: ResidualReport | null) => void;
  onConflict?: () => void;
  /** single-vertex selections cannot rotate about their barycenter */
  selectionSize?: () => number;
}

const DEFAULT_TO_WORLD = (dx: number, dy: number): [number, number, number] => [
  dx * 0.01,
  -dy * 0.01,
  0,
];

export class DragController {
  private lastSent = -Infinity;
  private inFlight = false;
  private pendingDelta: [number, number] | null = null;
  private dragging = false;
  private last: [number, number] | null = null;
  private revision: number;
  readonly minIntervalMs: number;
  requestCount = 0;

  constructor(
    private service: MoveService,
    revision: number,
    private mode: "translate" | "stretch" = "translate",
    private options: DragOptions = {}
  ) {
    this.revision = revision;
    this.minIntervalMs = 1000 / (options.maxRequestsPerSecond ?? 30);
  }

  get currentRevision(): number {
    return this.revision;
  }

  syncRevision(revision: number): void {
    this.revision = revision;
  }

  canRotate(): boolean {
    const size = this.options.selectionSize?.() ?? 2;
    return size > 1;
  }

  pointerDown(x: number, y: number): void {
    this.dragging = true;
    this.last = [x, y];
  }

  pointerMove(x: number, y: number): Promise<void> | undefined {
    if (!this.dragging || !this.last) return undefined;
    const dx = x - this.last[0];
    const dy = y - this.last[1];
    this.last = [x, y];
    if (dx === 0 && dy === 0) return undefined; // zero-length: no request
    if (this.pendingDelta) {
      this.pendingDelta[0] += dx;
      this.pendingDelta[1] += dy;
    } else {
      this.pendingDelta = [dx, dy];
    }
    return this.flush();
  }

  pointerUp(): Promise<void> | undefined {
    this.dragging = false;
    this.last = null;
    return this.flush(true);
  }

  private now(): number {
    return this.options.now?.() ?? Date.now();
  }

  private buildOp(delta: [number, number]): MoveOp {
    const toWorld = this.options.toWorld ?? DEFAULT_TO_WORLD;
    const world = toWorld(delta[0], delta[1]);
    if (this.mode === "stretch") {
      const length = Math.hypot(...world);
      if (length === 0) {
        return { op: "stretch", params: { direction: [1, 0, 0], amount: 0 } };
      }
      const direction = world.map((v) => v / length) as [number, number, number];
      return { op: "stretch", params: { direction, amount: length } };
    }
    return { op: "translate", params: { vector: world } };
  }

  private flush(force = false): Promise<void> | undefined {
    if (this.inFlight || !this.pendingDelta) return undefined;
    const elapsed = this.now() - this.lastSent;
    if (!force && elapsed < this.minIntervalMs) return undefined;
    const delta = this.pendingDelta;
    this.pendingDelta = null;
    this.lastSent = this.now();
    this.inFlight = true;
    this.requestCount += 1;
    return this.service
      .move(this.buildOp(delta), this.revision)
      .then((response) => {
        this.revision = response.revision;
        this.options.onResiduals?.(response.residuals);
      })
      .catch((err: unknown) => {
        if ((err as { status?: number }).status === 409) {
          this.options.onConflict?.();
        } else {
          throw err;
        }
      })
      .finally(() => {
        this.inFlight = false;
      });
  }
}
