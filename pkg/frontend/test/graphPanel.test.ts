import { describe, expect, it } from "vitest";

import { GraphPanel } from "../src/graphPanel.js";
import type { AnnotationJson, RelationshipJson } from "../src/types.js";

const ANNOTATIONS: AnnotationJson[] = [
  { id: 1, tag: "head", colour: [255, 0, 0], attributes: [], type: "region", boundaries: [[0, 1, 2]] },
  { id: 2, tag: "hat", colour: [0, 255, 0], attributes: [], type: "region", boundaries: [[3, 4, 5]] },
  { id: 3, tag: "brim", colour: [0, 0, 255], attributes: [], type: "point", points: [9] },
];

const RELATIONSHIPS: RelationshipJson[] = [
  { id: 0, type: "containment", isDirected: true, annotations: [2, 3], isConstraint: false },
  { id: 1, type: "adjacency", isDirected: false, annotations: [1, 2], isConstraint: false },
  {
    id: 2, type: "Proportion", isDirected: true, annotations: [2, 1],
    isConstraint: true, weight: 2.0,
    constraint: { measure1: 0, measure2: 0, minValue: 0.9, maxValue: 1.1 },
  },
];

function panel(): GraphPanel {
  const p = new GraphPanel();
  p.load(ANNOTATIONS, RELATIONSHIPS);
  return p;
}

describe("GraphPanel", () => {
  it("creates one node per annotation with its colour", () => {
    const p = panel();
    expect(p.nodes.map((n) => n.id)).toEqual([1, 2, 3]);
    expect(p.node(2)?.colour).toEqual([0, 255, 0]);
  });

  it("directed arcs render arrows toward the contained annotation", () => {
    const p = panel();
    const containment = p
      .drawList()
      .find((seg) => seg.arc.type === "containment");
    expect(containment?.kind).toBe("arrow");
    expect(containment?.x1).toBe(p.node(2)!.x);
    expect(containment?.x2).toBe(p.node(3)!.x);
    const adjacency = p.drawList().find((seg) => seg.arc.type === "adjacency");
    expect(adjacency?.kind).toBe("line");
  });

  it("hover text shows weight and type for constraints", () => {
    const p = panel();
    const proportion = p.arcs.find((a) => a.type === "Proportion")!;
    expect(proportion.hoverText).toContain("Proportion");
    expect(proportion.hoverText).toContain("weight 2");
    expect(proportion.hoverText).toContain("minValue");
  });

  it("rejects measure constraints over three selected nodes", () => {
    const p = panel();
    p.toggleSelect(1);
    p.toggleSelect(2);
    p.toggleSelect(3);
    const error = p.validateNewRelationship("Proportion", {
      minValue: 0.9,
      maxValue: 1.1,
      weight: 1,
    });
    expect(error).toMatch(/between 2 annotations/);
  });

  it("accepts a valid two-node proportion", () => {
    const p = panel();
    p.toggleSelect(1);
    p.toggleSelect(2);
    expect(
      p.validateNewRelationship("Proportion", {
        minValue: 0.9,
        maxValue: 1.1,
        weight: 1,
      })
    ).toBeNull();
  });

  it("mirrors range and weight validation messages", () => {
    const p = panel();
    p.toggleSelect(1);
    p.toggleSelect(2);
    expect(
      p.validateNewRelationship("Distance", { minValue: 2, maxValue: 1 })
    ).toMatch(/minValue exceeds/);
    expect(
      p.validateNewRelationship("Distance", {
        minValue: 0,
        maxValue: 1,
        weight: -1,
      })
    ).toMatch(/weight/);
  });
});
