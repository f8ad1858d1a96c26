"""Synthetic fragment-fitting experiment: build a warped fragment from a
known cage deformation, place it rigidly, fit non-rigidly, and report
per-iteration correspondence statistics.

Usage: python scripts/fit_experiment.py [warp_scale] [seed]
"""

import sys

import numpy as np

from cageforge import Document, Fragment, FitOptions, create_annotation
from cageforge.annotation import Annotation
from cageforge.binding import apply_deformation
from cageforge.fitting import match_landmarks, nonrigid_fit, rigid_place
from cageforge.mesh import TriangleMesh
from cageforge.shapes import cube, octasphere


def equator_loop(mesh):
    on_eq = np.flatnonzero(np.abs(mesh.vertices[:, 2]) < 1e-9)
    chosen = set(int(v) for v in on_eq)
    loop = [int(on_eq[0])]
    prev = None
    while True:
        nxt = [int(v) for v in mesh.vertex_neighbors[loop[-1]]
               if int(v) in chosen and int(v) != prev]
        nxt = [v for v in nxt if v != loop[0] or len(loop) > 2]
        prev = loop[-1]
        if nxt[0] == loop[0]:
            return loop
        loop.append(nxt[0])


def build_doc(level=4):
    doc = Document()
    mesh = octasphere(level)
    doc.set_template(mesh)
    doc.set_cage(cube(side=2.8, center=(0, 0, 0)))
    doc.bind("mvc")
    loop = equator_loop(mesh)
    region = create_annotation(mesh, "region", [loop], "cap", ann_id=0)
    if np.mean([mesh.vertices[mesh.triangles[t]][:, 2].mean()
                for t in region.interior]) < 0:
        other = frozenset(range(mesh.triangle_count)) - region.interior
        region = Annotation(**{**region.__dict__, "interior": other})
    anns = [region]
    for k, (tag, axis, sign) in enumerate(
        [("top", 2, 1), ("px", 0, 1), ("py", 1, 1), ("nx", 0, -1)], start=1
    ):
        idx = int(np.argmax(sign * mesh.vertices[:, axis]))
        anns.append(create_annotation(mesh, "point", [idx], tag, ann_id=k))
    doc.set_annotations(anns)
    return doc


def build_fragment(doc, warp):
    mesh = doc.template
    region = doc.annotations[0]
    tris = sorted(region.interior)
    used = sorted({int(v) for t in tris for v in mesh.triangles[t]})
    remap = {v: i for i, v in enumerate(used)}
    verts = apply_deformation(doc.binding, warp)[used]
    faces = [[remap[int(v)] for v in mesh.triangles[t]] for t in tris]
    frag_mesh = TriangleMesh(verts, faces)
    anns = [create_annotation(
        frag_mesh, "region", [[remap[v] for v in region.boundaries[0]]],
        "cap", ann_id=0)]
    for ann in doc.annotations[1:]:
        v = int(ann.points[0])
        if v in remap:
            anns.append(create_annotation(frag_mesh, "point", [remap[v]],
                                          ann.tag, ann_id=ann.id))
    return Fragment(mesh=frag_mesh, annotations=anns)


def main(warp_scale=0.05, seed=0):
    warp_scale = float(warp_scale)
    rng = np.random.default_rng(int(seed))
    doc = build_doc()
    warp = np.array(doc.cage.vertices) + rng.normal(
        scale=warp_scale, size=(doc.cage.vertex_count, 3))
    fragment = build_fragment(doc, warp)
    doc.add_fragment(fragment)

    landmarks = match_landmarks(doc.annotations, fragment.annotations)
    scale, _ = rigid_place(doc, fragment, landmarks)
    print(f"rigid: template scaled by {scale:.6f}, "
          f"{len(landmarks)} landmarks")

    doc.constrain()
    _, report = nonrigid_fit(doc, fragment, FitOptions())
    print(f"{'iter':>4} {'count':>7} {'mean':>12} {'max':>12}")
    for i, row in enumerate(report.iterations):
        print(f"{i:>4} {row['correspondences']:>7} "
              f"{row['mean_distance']:>12.3e} {row['max_distance']:>12.3e}")
    first = report.iterations[0]["mean_distance"]
    last = report.iterations[-1]["mean_distance"]
    print(f"mean correspondence distance reduced by "
          f"{100 * (1 - last / first):.1f}% (converged={report.converged})")


if __name__ == "__main__":
    main(*sys.argv[1:])
