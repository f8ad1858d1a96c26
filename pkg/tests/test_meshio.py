import numpy as np
import pytest

from cageforge.errors import ParseError
from cageforge.meshio import load_mesh, save_mesh, save_ply_ascii

from conftest import cube, icosphere, tetrahedron

TETRA_OBJ = """\
# regular tetrahedron
v 1 1 1
v 1 -1 -1
v -1 1 -1
v -1 -1 1
f 1 2 3
f 1 4 2
f 1 3 4
f 2 4 3
"""

QUAD_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3 4
"""


class TestObj:
    def test_tetrahedron(self, tmp_path):
        p = tmp_path / "tetra.obj"
        p.write_text(TETRA_OBJ)
        mesh = load_mesh(p)
        assert mesh.vertex_count == 4
        assert mesh.triangle_count == 4
        assert mesh.is_closed

    def test_quad_fan_triangulated(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text(QUAD_OBJ)
        mesh = load_mesh(p)
        assert mesh.triangle_count == 2
        # the two triangles share the fan diagonal 0-2
        shared = set(map(tuple, mesh.edges)) & {(0, 2)}
        assert shared == {(0, 2)}

    def test_slash_and_negative_indices(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 -1\n")
        mesh = load_mesh(p)
        assert mesh.triangle_count == 1
        assert list(mesh.triangles[0]) == [0, 1, 2]

    def test_malformed(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0\nf 1 2 3\n")
        with pytest.raises(ParseError):
            load_mesh(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_mesh(tmp_path / "nope.obj")


class TestRoundTrips:
    @pytest.mark.parametrize("ext", ["obj", "ply", "off", "stl"])
    def test_roundtrip_geometry(self, tmp_path, ext):
        mesh = icosphere(1)
        p = tmp_path / f"m.{ext}"
        save_mesh(mesh, p)
        back = load_mesh(p)
        assert back.triangle_count == mesh.triangle_count
        if ext == "stl":
            # float32 quantization + welding preserves connectivity but
            # renumbers vertices in first-encounter order
            assert back.vertex_count == mesh.vertex_count
            a = np.array(sorted(map(tuple, np.round(back.vertices, 5))))
            b = np.array(sorted(map(tuple, np.round(mesh.vertices, 5))))
            np.testing.assert_allclose(a, b, atol=1e-4)
            assert back.is_closed == mesh.is_closed
        else:
            np.testing.assert_array_equal(back.triangles, mesh.triangles)
            np.testing.assert_array_equal(back.vertices, mesh.vertices)

    @pytest.mark.parametrize("ext", ["obj", "ply", "off", "stl"])
    def test_writer_deterministic(self, tmp_path, ext):
        mesh = cube()
        p1 = tmp_path / f"a.{ext}"
        p2 = tmp_path / f"b.{ext}"
        save_mesh(mesh, p1)
        save_mesh(mesh, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ply_ascii_reader(self, tmp_path):
        mesh = tetrahedron()
        p = tmp_path / "m.ply"
        save_ply_ascii(mesh, p)
        assert p.read_bytes().startswith(b"ply\nformat ascii")
        back = load_mesh(p)
        np.testing.assert_array_equal(back.triangles, mesh.triangles)
        np.testing.assert_allclose(back.vertices, mesh.vertices)

    def test_cube_ply_euler(self, tmp_path):
        p = tmp_path / "cube.ply"
        save_mesh(cube(), p)
        mesh = load_mesh(p)
        assert mesh.vertex_count == 8
        assert mesh.triangle_count == 12
        assert len(mesh.edges) == 18  # V - E + F = 2
        assert mesh.is_closed

    def test_stl_welds_exact_duplicates(self, tmp_path):
        mesh = cube()
        p = tmp_path / "cube.stl"
        save_mesh(mesh, p)
        back = load_mesh(p)
        assert back.vertex_count == 8
        assert back.is_closed

    def test_off_header_required(self, tmp_path):
        p = tmp_path / "x.off"
        p.write_text("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
        with pytest.raises(ParseError):
            load_mesh(p)
