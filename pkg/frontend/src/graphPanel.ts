/** Relationship-graph view model: annotations as nodes on a circle,
 * arcs drawn as lines or arrows by direction, hover details, and the
 * add-relationship form with engine-mirroring validation. */

import type { AnnotationJson, RelationshipJson } from "./types.js";

export interface GraphNode {
  id: number;
  tag: string;
  colour: [number, number, number];
  x: number;
  y: number;
}

export interface GraphArc {
  id: number;
  type: string;
  directed: boolean;
  from: number;
  to: number;
  others: number[]; // hyper-arc members beyond the first two
  isConstraint: boolean;
  weight?: number;
  hoverText: string;
}

const MEASURE_CONSTRAINTS = new Set(["Proportion", "SameMeasure"]);

export class GraphPanel {
  nodes: GraphNode[] = [];
  arcs: GraphArc[] = [];
  selected: number[] = [];

  load(
    annotations: AnnotationJson[],
    relationships: RelationshipJson[],
    radius = 100
  ): void {
    this.nodes = annotations.map((ann, index) => {
      const angle = (2 * Math.PI * index) / Math.max(annotations.length, 1);
      return {
        id: ann.id,
        tag: ann.tag,
        colour: ann.colour,
        x: radius * Math.cos(angle),
        y: radius * Math.sin(angle),
      };
    });
    this.arcs = relationships.map((rel) => ({
      id: rel.id,
      type: rel.type,
      directed: rel.isDirected,
      from: rel.annotations[0],
      to: rel.annotations[1],
      others: rel.annotations.slice(2),
      isConstraint: rel.isConstraint,
      weight: rel.weight,
      hoverText: hoverText(rel),
    }));
  }

  node(id: number): GraphNode | undefined {
    return this.nodes.find((n) => n.id === id);
  }

  toggleSelect(id: number): void {
    const at = this.selected.indexOf(id);
    if (at >= 0) this.selected.splice(at, 1);
    else this.selected.push(id);
  }

  /** Mirror of the engine's per-type parameter validation so the form
   * can reject bad input before posting. Returns an error string or
   * null when the candidate is acceptable. */
  validateNewRelationship(
    type: string,
    params: Record<string, number | undefined>
  ): string | null {
    if (this.selected.length < 2) {
      return "select at least 2 annotations";
    }
    if (MEASURE_CONSTRAINTS.has(type) && this.selected.length !== 2) {
      return "measures are constrainable only if the relationship is between 2 annotations";
    }
    const { minValue, maxValue, weight } = params;
    if (weight !== undefined && weight <= 0) {
      return "constraint weight must be positive";
    }
    if (
      minValue !== undefined &&
      maxValue !== undefined &&
      minValue > maxValue
    ) {
      return "minValue exceeds maxValue";
    }
    return null;
  }

  /** SVG-ish draw list: segments for undirected arcs, segments with an
   * arrowhead toward the contained/affected annotation otherwise. */
  drawList(): Array<{
    kind: "line" | "arrow";
    x1: number;
    y1: number;
    x2: number;
    y2: number;
    arc: GraphArc;
  }> {
    const out = [];
    for (const arc of this.arcs) {
      const a = this.node(arc.from);
      const members = [arc.to, ...arc.others];
      for (const m of members) {
        const b = this.node(m);
        if (!a || !b) continue;
        out.push({
          kind: arc.directed ? ("arrow" as const) : ("line" as const),
          x1: a.x,
          y1: a.y,
          x2: b.x,
          y2: b.y,
          arc,
        });
      }
    }
    return out;
  }
}

function hoverText(rel: RelationshipJson): string {
  const parts = [`${rel.type}`, `annotations ${rel.annotations.join(", ")}`];
  if (rel.isConstraint) {
    parts.push(`weight ${rel.weight}`);
    if (rel.constraint && Object.keys(rel.constraint).length > 0) {
      parts.push(JSON.stringify(rel.constraint));
    }
  }
  return parts.join(" | ");
}
