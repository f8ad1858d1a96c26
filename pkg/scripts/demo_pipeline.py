"""End-to-end demo: generate a cage for a sphere, bind, annotate,
constrain a measure, drag a handle, write everything to ./demo_out/.

Usage: python scripts/demo_pipeline.py [output_dir]
"""

import sys
from pathlib import Path

import numpy as np

from cageforge import (
    Translate,
    apply_deformation,
    compute_mvc,
    create_annotation,
    generate_cage,
    save_mesh,
    write_annotations,
    write_coords,
    write_graph,
)
from cageforge.annotation import Annotation, Attribute
from cageforge.mesh import TriangleMesh
from cageforge.semgraph import RelationshipGraph, add_relationship
from cageforge.shapes import icosphere
from cageforge.solver import build_session, solve


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(exist_ok=True)

    template = icosphere(3)
    print(f"template: {template.vertex_count} vertices, "
          f"{template.triangle_count} triangles")

    cage = generate_cage(template, target_faces=80)
    print(f"cage: {cage.vertex_count} vertices, genus {cage.genus()}")
    save_mesh(template, out / "template.obj")
    save_mesh(cage, out / "cage.obj")

    coords = compute_mvc(template, cage)
    write_coords(coords, out / "coords.txt")

    # annotate two poles and pin their distance
    top = int(np.argmax(template.vertices[:, 2]))
    bottom = int(np.argmin(template.vertices[:, 2]))
    d0 = float(np.linalg.norm(template.vertices[top] - template.vertices[bottom]))
    a1 = create_annotation(template, "point", [top], "north", (255, 0, 0),
                           ann_id=1)
    a2 = create_annotation(template, "point", [bottom], "south", (0, 0, 255),
                           ann_id=2)
    a1 = Annotation(**{**a1.__dict__, "attributes": (
        Attribute(id=0, name="height", kind="measure", tool="ruler",
                  points=(top, bottom)),
    )})
    write_annotations([a1, a2], out / "annotations.json")

    graph = RelationshipGraph(nodes={1, 2})
    add_relationship(graph, "Distance", [1, 2], False,
                     params={"minValue": d0, "maxValue": d0}, weight=1.0)
    write_graph(graph, out / "graph.json")

    session = build_session(cage, coords, graph.arcs, [a1, a2])
    drag = {0: cage.vertices[0] + np.array([0.4, 0.4, 0.4])}
    deformed_cage, report = solve(session, drag)
    deformed = apply_deformation(coords, deformed_cage)
    save_mesh(TriangleMesh(deformed, template.triangles), out / "deformed.obj")

    height = float(np.linalg.norm(deformed[top] - deformed[bottom]))
    print(f"height at rest {d0:.6f}, after constrained drag {height:.6f}")
    for entry in report.entries:
        if entry["kind"] != "rest_anchor":
            print(f"  {entry['kind']:>15}: residual {entry['residual']:.3e} "
                  f"satisfied={entry['satisfied']}")
    print(f"outputs in {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
