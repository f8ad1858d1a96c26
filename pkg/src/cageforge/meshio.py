"""Triangle mesh file I/O: ASCII OBJ, ASCII/binary PLY, OFF, binary STL.

Polygonal faces with more than three vertices are fan-triangulated on
load. STL soup is welded by exact coordinate equality. Writers are
canonical: repeated writes of the same mesh are byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import TriangleMesh

_FORMATS = ("obj", "ply", "off", "stl")


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        f = fmt.lower()
        if f not in _FORMATS:
            raise ParseError(f"unknown mesh format {fmt!r}")
        return f
    suffix = path.suffix.lower().lstrip(".")
    if suffix in _FORMATS:
        return suffix
    raise ParseError(f"cannot infer mesh format from {path.name!r}")


def _fan(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def load_mesh(path, fmt: str | None = None) -> TriangleMesh:
    """Load and validate a triangle mesh.

    Parameters
    ----------
    path : str or Path
        Input file.
    fmt : str, optional
        One of "obj", "ply", "off", "stl"; inferred from the suffix when
        omitted.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    f = _infer_format(path, fmt)
    reader = {"obj": _read_obj, "ply": _read_ply, "off": _read_off, "stl": _read_stl}[f]
    vertices, triangles = reader(path)
    return TriangleMesh(vertices, triangles)


def save_mesh(mesh: TriangleMesh, path, fmt: str | None = None) -> None:
    """Write a mesh; format inferred from the suffix when not given."""
    path = Path(path)
    f = _infer_format(path, fmt)
    writer = {"obj": _write_obj, "ply": _write_ply, "off": _write_off, "stl": _write_stl}[f]
    writer(mesh, path)


# --- OBJ ----------------------------------------------------------------


def _read_obj(path: Path):
    vertices = []
    faces = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"{path.name}:{lineno}: short vertex line")
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise ParseError(f"{path.name}:{lineno}: {exc}") from exc
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise ParseError(f"{path.name}:{lineno}: bad index {tok!r}") from exc
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            if len(idx) < 3:
                raise ParseError(f"{path.name}:{lineno}: face with <3 vertices")
            faces.extend(_fan(idx))
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _fmt_float(x: float) -> str:
    return f"{x:.17g}"


def _write_obj(mesh: TriangleMesh, path: Path):
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {_fmt_float(v[0])} {_fmt_float(v[1])} {_fmt_float(v[2])}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    path.write_text("\n".join(lines) + "\n")


# --- OFF ----------------------------------------------------------------


def _read_off(path: Path):
    tokens = []
    for line in path.read_text().splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.extend(body.split())
    if not tokens or tokens[0] != "OFF":
        raise ParseError(f"{path.name}: missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # OFF nv nf ne
        vertices = []
        for _ in range(nv):
            vertices.append([float(x) for x in tokens[pos : pos + 3]])
            pos += 3
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            idx = [int(x) for x in tokens[pos + 1 : pos + 1 + k]]
            pos += 1 + k
            if k < 3:
                raise ParseError(f"{path.name}: face with <3 vertices")
            faces.extend(_fan(idx))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path.name}: truncated OFF data") from exc
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _write_off(mesh: TriangleMesh, path: Path):
    lines = ["OFF", f"{mesh.vertex_count} {mesh.triangle_count} 0"]
    for v in mesh.vertices:
        lines.append(f"{_fmt_float(v[0])} {_fmt_float(v[1])} {_fmt_float(v[2])}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")


# --- PLY ----------------------------------------------------------------

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path: Path):
    raw = path.read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise ParseError(f"{path.name}: not a PLY file")
    end = raw.index(b"\n", end) + 1
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop_name, type, list_count_type|None)])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path.name}: property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], parts[3], parts[2]))
            else:
                elements[-1][2].append((parts[2], parts[1], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path.name}: unsupported PLY format {fmt!r}")
    body = raw[end:]
    vertices, faces = [], []
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            for _ in range(count):
                values = {}
                for pname, ptype, ltype in props:
                    if ltype is None:
                        values[pname] = float(tokens[pos]); pos += 1
                    else:
                        k = int(tokens[pos]); pos += 1
                        values[pname] = [int(float(tokens[pos + j])) for j in range(k)]
                        pos += k
                _ply_collect(name, values, vertices, faces)
    else:
        pos = 0
        for name, count, props in elements:
            for _ in range(count):
                values = {}
                for pname, ptype, ltype in props:
                    if ltype is None:
                        code = _PLY_TYPES[ptype]
                        size = struct.calcsize("<" + code)
                        values[pname] = struct.unpack_from("<" + code, body, pos)[0]
                        pos += size
                    else:
                        ccode = _PLY_TYPES[ltype]
                        csize = struct.calcsize("<" + ccode)
                        k = struct.unpack_from("<" + ccode, body, pos)[0]
                        pos += csize
                        icode = _PLY_TYPES[ptype]
                        isize = struct.calcsize("<" + icode)
                        values[pname] = list(
                            struct.unpack_from(f"<{k}{icode}", body, pos)
                        )
                        pos += k * isize
                _ply_collect(name, values, vertices, faces)
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _ply_collect(element: str, values: dict, vertices: list, faces: list):
    if element == "vertex":
        try:
            vertices.append([values["x"], values["y"], values["z"]])
        except KeyError as exc:
            raise ParseError("PLY vertex element lacks x/y/z") from exc
    elif element == "face":
        idx = values.get("vertex_indices", values.get("vertex_index"))
        if idx is None:
            raise ParseError("PLY face element lacks vertex_indices")
        idx = [int(i) for i in idx]
        if len(idx) < 3:
            raise ParseError("PLY face with <3 vertices")
        faces.extend(_fan(idx))


def _write_ply(mesh: TriangleMesh, path: Path, binary: bool = True):
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {mesh.vertex_count}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.triangle_count}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    if binary:
        out = bytearray(("\n".join(header) + "\n").encode("ascii"))
        out += mesh.vertices.astype("<f8").tobytes()
        for t in mesh.triangles:
            out += struct.pack("<B3i", 3, int(t[0]), int(t[1]), int(t[2]))
        path.write_bytes(bytes(out))
    else:
        lines = header[:]
        for v in mesh.vertices:
            lines.append(f"{_fmt_float(v[0])} {_fmt_float(v[1])} {_fmt_float(v[2])}")
        for t in mesh.triangles:
            lines.append(f"3 {t[0]} {t[1]} {t[2]}")
        path.write_text("\n".join(lines) + "\n")


def save_ply_ascii(mesh: TriangleMesh, path) -> None:
    """Write an ASCII PLY (the default PLY writer is binary)."""
    _write_ply(mesh, Path(path), binary=False)


# --- STL ----------------------------------------------------------------


def _read_stl(path: Path):
    raw = path.read_bytes()
    if raw[:5] == b"solid" and b"facet" in raw[:1024]:
        tris = _read_stl_ascii(raw, path)
    else:
        tris = _read_stl_binary(raw, path)
    # weld duplicate vertices by exact coordinate match
    index: dict[tuple, int] = {}
    vertices: list[tuple] = []
    faces = []
    for tri in tris:
        face = []
        for p in tri:
            key = (p[0], p[1], p[2])
            i = index.get(key)
            if i is None:
                i = len(vertices)
                index[key] = i
                vertices.append(key)
            face.append(i)
        faces.append(tuple(face))
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _read_stl_binary(raw: bytes, path: Path):
    if len(raw) < 84:
        raise ParseError(f"{path.name}: truncated STL")
    (count,) = struct.unpack_from("<I", raw, 80)
    if len(raw) < 84 + 50 * count:
        raise ParseError(f"{path.name}: STL facet data truncated")
    tris = []
    for k in range(count):
        rec = struct.unpack_from("<12fH", raw, 84 + 50 * k)
        tris.append(
            (
                (rec[3], rec[4], rec[5]),
                (rec[6], rec[7], rec[8]),
                (rec[9], rec[10], rec[11]),
            )
        )
    return tris


def _read_stl_ascii(raw: bytes, path: Path):
    tris = []
    cur = []
    for line in raw.decode("ascii", errors="replace").splitlines():
        parts = line.split()
        if parts[:1] == ["vertex"]:
            try:
                cur.append(tuple(float(x) for x in parts[1:4]))
            except ValueError as exc:
                raise ParseError(f"{path.name}: bad STL vertex line") from exc
        elif parts[:1] == ["endfacet"]:
            if len(cur) != 3:
                raise ParseError(f"{path.name}: STL facet with {len(cur)} vertices")
            tris.append(tuple(cur))
            cur = []
    return tris


def _write_stl(mesh: TriangleMesh, path: Path):
    out = bytearray(b"\x00" * 80)
    out += struct.pack("<I", mesh.triangle_count)
    normals = mesh.triangle_normals.astype("<f4")
    pts = mesh.vertices.astype("<f4")
    for k, t in enumerate(mesh.triangles):
        out += normals[k].tobytes()
        out += pts[t[0]].tobytes() + pts[t[1]].tobytes() + pts[t[2]].tobytes()
        out += struct.pack("<H", 0)
    path.write_bytes(bytes(out))
