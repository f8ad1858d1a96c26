"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS/FAIL
line per criterion.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from cageforge.annotation import (
    Annotation,
    Attribute,
    create_annotation,
    read_annotations,
    transfer_annotations,
    write_annotations,
)
from cageforge.binding import (
    apply_deformation,
    compute_gc,
    compute_mvc,
    read_coords,
    write_coords,
)
from cageforge.cagegen import generate_cage
from cageforge.document import Document, Fragment
from cageforge.errors import SchemaError
from cageforge.fitting import (
    FitOptions,
    SimilarityTransform,
    match_landmarks,
    nonrigid_fit,
    rigid_place,
    umeyama_similarity,
)
from cageforge.mesh import TriangleMesh, path_length, shortest_edge_path
from cageforge.semgraph import Relationship, read_graph, write_graph
from cageforge.semgraph import RelationshipGraph, add_relationship
from cageforge.solver import (
    SolverOptions,
    build_session,
    make_closeness,
    solve,
    vertex_indicator_rows,
)
from cageforge.spatial import signed_distances

from conftest import (
    box_mesh,
    cube,
    grid_square,
    icosphere,
    loop_subdivide,
    octasphere,
    tetrahedron,
    torus,
)

from test_annotation import equator_loop
from test_fitting import build_template_doc, make_fragment
from test_mesh import full_dijkstra


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"FAIL {name}")
        raise
    print(f"PASS {name}")


def fixture_pairs():
    """Template/cage pairs: tetra-in-cube, sphere-in-box, torus-in-cage,
    bar-in-box, sphere-in-tetra (all <= 5k template vertices)."""
    return [
        ("tetra-in-cube", tetrahedron(), cube(side=3.0, center=(0, 0, 0))),
        ("sphere-in-box", icosphere(3), cube(side=2.6, center=(0, 0, 0))),
        ("torus-in-offset-cage",
         torus(major=1.0, minor=0.2, nu=24, nv=12),
         torus(major=1.0, minor=0.5, nu=12, nv=8)),
        ("bar-in-box", box_mesh(size=(2.0, 0.8, 0.6), n=(6, 3, 3)),
         cube(side=2.8, center=(0, 0, 0))),
        ("sphere-in-tetra", icosphere(2), tetrahedron(scale=4.0)),
    ]


def test_mvc_correctness():
    with criterion("MVC partition of unity, reproduction, affine commutation"):
        start = time.monotonic()
        rng = np.random.default_rng(101)
        for name, template, cage in fixture_pairs():
            coords = compute_mvc(template, cage)
            diag = max(cage.diagonal, template.diagonal)
            sums = coords.vertex_weights.sum(axis=1)
            assert np.abs(sums - 1.0).max() < 1e-8, name
            recon = coords.vertex_weights @ cage.vertices
            assert np.abs(recon - template.vertices).max() < 1e-6 * diag, name
            for _ in range(20):
                a = rng.normal(size=(3, 3)) + 2.5 * np.eye(3)
                b = rng.normal(size=3)
                got = apply_deformation(coords, cage.vertices @ a.T + b)
                expect = template.vertices @ a.T + b
                scale = max(np.abs(expect).max(), 1.0)
                assert np.abs(got - expect).max() / scale < 1e-6, name
        assert time.monotonic() - start < 30.0


def test_gc_correctness(tmp_path):
    with criterion("GC rest reproduction, similarity commutation, file tail"):
        rng = np.random.default_rng(77)
        for name, template, cage in fixture_pairs():
            coords = compute_gc(template, cage)
            scale0 = max(np.abs(template.vertices).max(), 1.0)
            recon = apply_deformation(coords, cage.vertices)
            assert np.abs(recon - template.vertices).max() / scale0 < 1e-9, name
            for _ in range(20):
                rot = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
                s = float(rng.uniform(0.3, 2.5))
                t = rng.normal(size=3)
                got = apply_deformation(coords, s * cage.vertices @ rot.T + t)
                expect = s * template.vertices @ rot.T + t
                ref = max(np.abs(expect).max(), 1.0)
                assert np.abs(got - expect).max() / ref < 1e-5, name
        template, cage = icosphere(1), cube(side=3.0, center=(0, 0, 0))
        coords = compute_gc(template, cage)
        path = tmp_path / "gc.txt"
        write_coords(coords, path)
        rows = path.read_text().splitlines()[2:]
        width = {len(r.split()) for r in rows}
        assert width == {cage.vertex_count + cage.triangle_count}


def test_geodesic_oracle():
    with criterion("shortest_edge_path ties exhaustive Dijkstra exactly"):
        rng = np.random.default_rng(5)
        for mesh in (icosphere(2), torus(nu=16, nv=10), grid_square(9)):
            n = mesh.vertex_count
            for _ in range(100):
                a, b = (int(x) for x in rng.integers(0, n, size=2))
                dist = full_dijkstra(mesh, a)
                path = shortest_edge_path(mesh, a, b)
                assert path_length(mesh, path) == dist[b]


def test_umeyama():
    with criterion("Umeyama construct-and-recover and reflection fixtures"):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(1000):
            pts = rng.normal(size=(10, 3))
            s0 = float(rng.uniform(0.2, 5.0))
            r0 = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
            t0 = rng.normal(size=3) * 5
            sim = umeyama_similarity(pts, s0 * pts @ r0.T + t0)
            worst = max(worst, abs(sim.scale - s0),
                        float(np.abs(sim.rotation - r0).max()),
                        float(np.abs(sim.translation - t0).max()))
        assert worst < 1e-9

        from scipy.optimize import minimize

        for seed in (1, 2, 3):
            rng = np.random.default_rng(seed)
            pts = rng.normal(size=(8, 3))
            target = pts * np.array([-1.0, 1.0, 1.0]) + rng.normal(size=3)
            sim = umeyama_similarity(pts, target)
            assert abs(np.linalg.det(sim.rotation) - 1.0) < 1e-9
            got = float(((sim.apply(pts) - target) ** 2).sum())

            def cost(x):
                rot = Rotation.from_rotvec(x[:3]).as_matrix()
                gap = np.exp(x[3]) * pts @ rot.T + x[4:] - target
                return float((gap * gap).sum())

            best = min(
                minimize(cost,
                         np.concatenate([np.random.default_rng(k).normal(size=3),
                                         [0.0], np.zeros(3)]),
                         method="Nelder-Mead",
                         options={"maxiter": 8000, "xatol": 1e-12,
                                  "fatol": 1e-14}).fun
                for k in range(8)
            )
            assert abs(got - best) < 1e-7


def bound_cube_sphere():
    template = icosphere(1)
    cage = cube(side=3.0, center=(0, 0, 0))
    return template, cage, compute_mvc(template, cage)


def test_solver():
    with criterion("solver: analytic minimizer, monotone energy, LSQ oracle, "
                   "weight-scaling invariance"):
        template, cage, coords = bound_cube_sphere()
        n = cage.vertex_count

        # weighted-average fixture
        session = build_session(cage, coords)
        t1 = cage.vertices[2] + np.array([0.5, 0.0, 0.0])
        t2 = cage.vertices[2] + np.array([0.0, 0.7, 0.0])
        w1, w2 = 3.0, 1.5
        session.add_constraint(make_closeness(
            vertex_indicator_rows(n, [2]), [t1], w1))
        session.add_constraint(make_closeness(
            vertex_indicator_rows(n, [2]), [t2], w2))
        x, _ = solve(session)
        assert np.linalg.norm(x[2] - (w1 * t1 + w2 * t2) / (w1 + w2)) < 1e-6

        # energy monotone over 20 randomized sessions
        rng = np.random.default_rng(21)
        for trial in range(20):
            anns = [
                create_annotation(template, "point", [int(v)], f"p{k}",
                                  ann_id=k)
                for k, v in enumerate(
                    rng.choice(template.vertex_count, size=6, replace=False))
            ]
            rels = []
            for k in range(3):
                i, j = (int(x) for x in rng.choice(6, size=2, replace=False))
                lo = float(rng.uniform(0.1, 0.6))
                rels.append(Relationship(
                    id=k, type="Distance", is_directed=False,
                    annotations=(i, j), is_constraint=True,
                    weight=float(rng.uniform(0.5, 4.0)),
                    params={"minValue": lo, "maxValue": lo + 0.15},
                ))
            s = build_session(cage, coords, rels, anns)
            _, report = solve(s, {0: cage.vertices[0] + rng.normal(scale=0.2,
                                                                   size=3)})
            trace = np.array(report.energy_trace)
            assert (np.diff(trace) <= 1e-12 * max(trace[0], 1.0)).all(), trial

        # closeness-only LSQ oracle on a <= 50-vertex cage
        session = build_session(cage, coords)
        rng = np.random.default_rng(33)
        for v in (0, 2, 5, 7):
            session.add_constraint(make_closeness(
                vertex_indicator_rows(n, [v]),
                [cage.vertices[v] + rng.normal(size=3)],
                float(rng.uniform(0.5, 2.0)),
            ))
        x, _ = solve(session)
        rows = np.vstack([np.sqrt(c.row_weight) * c.rows
                          for c in session.constraints])
        rhs = np.vstack([np.sqrt(c.row_weight) * np.asarray(c.params["targets"])
                         for c in session.constraints])
        oracle, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
        assert np.abs(x - oracle).max() < 1e-8

        # uniform weight scaling leaves the minimizer unchanged
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [7], "b", ann_id=2)

        def run(scale):
            rel = Relationship(
                id=0, type="Distance", is_directed=False, annotations=(1, 2),
                is_constraint=True, weight=2.0 * scale,
                params={"minValue": 0.1, "maxValue": 0.3},
            )
            s = build_session(cage, coords, [rel], [a1, a2])
            xs, _ = solve(s, {2: cage.vertices[2] + [0.3, 0, 0]})
            return xs

        assert np.abs(run(1.0) - run(253.0)).max() < 1e-7


def test_constrained_measure_preservation():
    with criterion("fixed-length constraint holds a measure through a drag"):
        template = box_mesh(size=(2.0, 0.6, 0.6), n=(6, 2, 2))
        cage = cube(side=3.2, center=(0, 0, 0))
        coords = compute_mvc(template, cage)
        vi, vj = 0, template.vertex_count - 1
        d0 = float(np.linalg.norm(template.vertices[vi] - template.vertices[vj]))
        a1 = create_annotation(template, "point", [vi], "a", ann_id=1)
        a2 = create_annotation(template, "point", [vj], "b", ann_id=2)
        rel = Relationship(
            id=0, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"minValue": d0, "maxValue": d0},
        )
        drag = {0: cage.vertices[0] + np.array([-0.8, -0.8, -0.8])}

        def measured(x):
            pa = coords.vertex_weights[vi] @ x
            pb = coords.vertex_weights[vj] @ x
            return float(np.linalg.norm(pa - pb))

        free = build_session(cage, coords)
        xf, _ = solve(free, drag)
        assert abs(measured(xf) - d0) > 0.10 * d0  # drag would distort > 10%

        constrained = build_session(cage, coords, [rel], [a1, a2])
        xc, _ = solve(constrained, drag)
        assert abs(measured(xc) - d0) <= 1e-4 * d0


def test_fitting_pipeline():
    with criterion("fitting: rigid recovery, >=90% correspondence reduction, "
                   "runtime"):
        start = time.monotonic()

        # rigid recovery on a pure-similarity fragment (10k-vertex template)
        doc = build_template_doc_large()
        sim = SimilarityTransform(
            scale=1.7,
            rotation=Rotation.from_rotvec([0.2, -0.3, 0.4]).as_matrix(),
            translation=np.array([2.0, 1.0, -1.5]),
        )
        frag = make_fragment_from(doc, transform=sim)
        landmarks = match_landmarks(doc.annotations, frag.annotations)
        scale, _ = rigid_place(doc, frag, landmarks)
        assert abs(scale - 1.7) < 1e-6
        t_pts = doc.template.vertices[landmarks.template_indices()]
        f_pts = frag.mesh.vertices[landmarks.fragment_indices()]
        assert np.sqrt(((t_pts - f_pts) ** 2).sum(axis=1).mean()) < 1e-6

        # non-rigid reduction on a warped fragment
        doc = build_template_doc_large()
        rng = np.random.default_rng(13)
        warp = np.array(doc.cage.vertices)
        warp += rng.normal(scale=0.05, size=warp.shape)
        frag = make_fragment_from(doc, cage_warp=warp)
        doc.add_fragment(frag)
        doc.constrain()
        _, report = nonrigid_fit(doc, frag, FitOptions())
        first = report.iterations[0]["mean_distance"]
        last = report.iterations[-1]["mean_distance"]
        assert last <= 0.10 * first
        assert time.monotonic() - start < 60.0


def build_template_doc_large():
    doc = Document()
    mesh = octasphere(6)  # 16386 vertices
    doc.set_template(mesh)
    doc.set_cage(cube(side=2.8, center=(0, 0, 0)))
    doc.bind("mvc")
    loop = equator_loop(mesh)
    region = create_annotation(mesh, "region", [loop], "cap", ann_id=0)
    if np.mean([mesh.vertices[mesh.triangles[t]][:, 2].mean()
                for t in region.interior]) < 0:
        other = frozenset(range(mesh.triangle_count)) - region.interior
        region = Annotation(**{**region.__dict__, "interior": other})
    landmarks = [
        create_annotation(mesh, "point", [int(np.argmax(mesh.vertices[:, 2]))],
                          "top", ann_id=1),
        create_annotation(mesh, "point", [int(np.argmax(mesh.vertices[:, 0]))],
                          "px", ann_id=2),
        create_annotation(mesh, "point", [int(np.argmax(mesh.vertices[:, 1]))],
                          "py", ann_id=3),
        create_annotation(mesh, "point", [int(np.argmin(mesh.vertices[:, 0]))],
                          "nx", ann_id=4),
    ]
    doc.set_annotations([region] + landmarks)
    return doc


def make_fragment_from(doc, transform=None, cage_warp=None):
    mesh = doc.template
    region = doc.annotations[0]
    tris = sorted(region.interior)
    used = sorted({int(v) for t in tris for v in mesh.triangles[t]})
    remap = {v: i for i, v in enumerate(used)}
    verts = mesh.vertices[used]
    if cage_warp is not None:
        verts = apply_deformation(doc.binding, cage_warp)[used]
    faces = [[remap[int(v)] for v in mesh.triangles[t]] for t in tris]
    frag_mesh = TriangleMesh(verts, faces)
    anns = [create_annotation(
        frag_mesh, "region", [[remap[v] for v in region.boundaries[0]]],
        "cap", ann_id=0)]
    for ann in doc.annotations[1:]:
        v = int(ann.points[0])
        if v in remap:
            anns.append(create_annotation(
                frag_mesh, "point", [remap[v]], ann.tag, ann_id=ann.id))
    frag = Fragment(mesh=frag_mesh, annotations=anns)
    if transform is not None:
        frag.apply_transform(transform)
    return frag


def golden_corpus(tmp_path):
    """20 interchange files: 8 annotation, 6 graph, 6 coordinate files."""
    mesh = octasphere(2)
    loop = equator_loop(mesh)
    rng = np.random.default_rng(3)
    files = []

    for k in range(8):
        anns = []
        anns.append(create_annotation(
            mesh, "point",
            sorted(int(v) for v in
                   rng.choice(mesh.vertex_count, size=3, replace=False)),
            f"points-{k} é", (k, 2 * k, 255 - k), ann_id=0))
        anns.append(create_annotation(
            mesh, "line", [loop[: 4 + k % 3]], "ridge", (0, 0, 0), ann_id=1))
        region = create_annotation(mesh, "region", [loop], "cap",
                                   (5, 5, 5), ann_id=2)
        attrs = (
            Attribute(id=0, name="note", kind="semantic", note=f"free text {k}"),
            Attribute(id=1, name="span", kind="measure", tool="ruler",
                      points=(0, 5)),
            Attribute(id=2, name="girth", kind="measure", tool="tape",
                      points=(0, 5, 9)),
            Attribute(id=3, name="width", kind="measure", tool="bounding",
                      points=tuple(int(v) for v in loop[:5]),
                      direction=(0.0, 0.0, 1.0)),
        )
        anns[0] = Annotation(**{**anns[0].__dict__, "attributes": attrs})
        p = tmp_path / f"ann-{k}.json"
        write_annotations(anns, p)
        files.append(("ann", p, anns))

    for k in range(6):
        graph = RelationshipGraph(nodes={0, 1, 2})
        add_relationship(graph, "adjacency", [0, 1], False)
        add_relationship(graph, "containment", [0, 2], True)
        add_relationship(graph, "Proportion", [1, 2], bool(k % 2),
                         params={"measure1": 0, "measure2": 0,
                                 "minValue": 0.5 + k / 10,
                                 "maxValue": 1.5},
                         weight=1.0 + k)
        add_relationship(graph, "Distance", [0, 1], False,
                         params={"minValue": 0.0, "maxValue": float(k + 1)},
                         weight=0.5)
        p = tmp_path / f"graph-{k}.json"
        write_graph(graph, p)
        files.append(("graph", p, graph))

    cage = cube(side=3.0, center=(0, 0, 0))
    for k in range(6):
        template = icosphere(0) if k % 2 else tetrahedron()
        coords = (compute_mvc if k < 3 else compute_gc)(template, cage)
        p = tmp_path / f"coords-{k}.txt"
        write_coords(coords, p)
        files.append(("coords", p, coords))
    return files, mesh


def test_file_formats(tmp_path):
    with criterion("file formats: byte-stable round trips + schema errors "
                   "naming fields"):
        files, mesh = golden_corpus(tmp_path)
        assert len(files) == 20
        for kind, path, _ in files:
            second = tmp_path / ("again-" + path.name)
            if kind == "ann":
                write_annotations(read_annotations(path, mesh), second)
            elif kind == "graph":
                write_graph(read_graph(path, [type("A", (), {"id": i})()
                                              for i in (0, 1, 2)]), second)
            else:
                back = read_coords(path)
                write_coords(back, second)
            assert path.read_bytes() == second.read_bytes(), path.name

        base_ann = {
            "annotations": [{
                "id": 0, "tag": "x", "colour": [1, 2, 3],
                "attributes": [
                    {"id": 0, "name": "n", "type": "semantic", "note": "t"},
                    {"id": 1, "name": "m", "type": "measure",
                     "measure": {"tool": "bounding", "points": [0],
                                 "direction": [0.0, 0.0, 1.0]}},
                ],
                "type": "point", "points": [0],
            }]
        }
        ann_violations = [
            ("id", ["annotations", 0]),
            ("tag", ["annotations", 0]),
            ("colour", ["annotations", 0]),
            ("type", ["annotations", 0]),
            ("points", ["annotations", 0]),
            ("name", ["annotations", 0, "attributes", 0]),
            ("note", ["annotations", 0, "attributes", 0]),
            ("measure", ["annotations", 0, "attributes", 1]),
        ]
        for field_name, crumb in ann_violations:
            doc = json.loads(json.dumps(base_ann))
            node = doc
            for step in crumb:
                node = node[step]
            del node[field_name]
            p = tmp_path / "bad-ann.json"
            p.write_text(json.dumps(doc))
            with pytest.raises(SchemaError, match=field_name):
                read_annotations(p, mesh)
        # tool/points/direction violations inside the measure object
        for field_name in ("tool", "points", "direction"):
            doc = json.loads(json.dumps(base_ann))
            del doc["annotations"][0]["attributes"][1]["measure"][field_name]
            p = tmp_path / "bad-ann.json"
            p.write_text(json.dumps(doc))
            with pytest.raises(SchemaError, match=field_name):
                read_annotations(p, mesh)

        base_graph = {
            "relationships": [{
                "id": 0, "type": "adjacency", "isDirected": False,
                "annotations": [0, 1], "isConstraint": False,
            }]
        }
        fake = [type("A", (), {"id": i})() for i in (0, 1)]
        for field_name in ("id", "type", "isDirected", "annotations",
                           "isConstraint"):
            doc = json.loads(json.dumps(base_graph))
            del doc["relationships"][0][field_name]
            p = tmp_path / "bad-graph.json"
            p.write_text(json.dumps(doc))
            with pytest.raises(SchemaError, match=field_name):
                read_graph(p, fake)
        # constraint without weight
        doc = json.loads(json.dumps(base_graph))
        doc["relationships"][0]["isConstraint"] = True
        p = tmp_path / "bad-graph.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="weight"):
            read_graph(p, fake)


def test_annotation_transfer():
    with criterion("region transfer: exact identity, <=2% area drift at one "
                   "subdivision"):
        mesh = octasphere(3)
        loop = equator_loop(mesh)
        region = create_annotation(mesh, "region", [loop], "cap", ann_id=0)

        identity = transfer_annotations(mesh, [region], mesh)
        assert identity[0].boundaries == region.boundaries
        assert identity[0].interior == region.interior

        fine = loop_subdivide(mesh)
        moved = transfer_annotations(mesh, [region], fine)
        src_area = sum(mesh.triangle_areas[t] for t in region.interior)
        dst_area = sum(fine.triangle_areas[t] for t in moved[0].interior)
        assert abs(dst_area - src_area) <= 0.02 * src_area


def test_cage_generation():
    with criterion("cage generation: closed, genus-correct, containing at "
                   "default offset"):
        for template, target, genus in (
            (icosphere(2), 100, 0),
            (torus(major=1.0, minor=0.3, nu=32, nv=16), 200, 1),
        ):
            cage = generate_cage(template, target_faces=target)  # 0.55 default
            assert cage.is_closed
            assert cage.genus() == genus
            assert (signed_distances(cage, template.vertices) < 0).all()
