/** Wire types mirroring the service's JSON responses. */

export interface ResidualEntry {
  id: number | null;
  kind: string;
  weight: number;
  residual: number;
  satisfied: boolean;
}

export interface ResidualReport {
  constraints: ResidualEntry[];
  totalEnergy: number;
  iterations: number;
  converged: boolean;
}

export interface MoveResponse {
  revision: number;
  residuals: ResidualReport | null;
}

export interface StreamMessage {
  revision: number;
  vertices: string; // base64 little-endian float32 xyz triplets
  residuals?: ResidualReport;
}

export interface DocSummary {
  revision: number;
  template: { vertices: number; edges: number; triangles: number } | null;
  cage: { vertices: number; edges: number; triangles: number } | null;
  binding: { method: string; counts: number[] } | null;
  session: boolean;
  annotations: number;
  relationships: number;
  selection: number[];
}

export interface MeshPayload {
  revision: number;
  vertices: string;
  triangles: number[];
}

export interface AnnotationJson {
  id: number;
  tag: string;
  colour: [number, number, number];
  attributes: AttributeJson[];
  type: "point" | "line" | "region";
  points?: number[];
  polylines?: number[][];
  boundaries?: number[][];
}

export interface AttributeJson {
  id: number;
  name: string;
  type: "semantic" | "measure";
  note?: string;
  measure?: {
    tool: "ruler" | "tape" | "bounding";
    points: number[];
    direction?: [number, number, number];
  };
}

export interface RelationshipJson {
  id: number;
  type: string;
  isDirected: boolean;
  annotations: number[];
  isConstraint: boolean;
  weight?: number;
  constraint?: Record<string, unknown>;
}

export type MoveOp =
  | { op: "translate"; params: { vector: [number, number, number] } }
  | { op: "rotate"; params: { axis: [number, number, number]; angle: number } }
  | {
      op: "stretch";
      params: { direction: [number, number, number]; amount: number };
    };
