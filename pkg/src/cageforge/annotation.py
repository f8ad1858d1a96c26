"""Part-based annotations: selectors, measured attributes, JSON
interchange and transfer across mesh resolutions."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyRegion,
    IndexOutOfRange,
    InvalidIndex,
    LoopCollapse,
    OpenLoop,
    SchemaError,
    Unreachable,
)
from .mesh import TriangleMesh, path_length, shortest_edge_path

SELECTOR_TYPES = ("point", "line", "region")
MEASURE_TOOLS = ("ruler", "tape", "bounding")


@dataclass(frozen=True)
class Attribute:
    """Qualitative note or measured quantity attached to an annotation.

    `kind` is "semantic" (free-text `note`) or "measure" (`tool`, `points`,
    optional `direction` for bounding, and a cached `value` recomputable
    from geometry).
    """

    id: int
    name: str
    kind: str
    note: str | None = None
    tool: str | None = None
    points: tuple = ()
    direction: tuple | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind == "semantic":
            if self.note is None:
                raise SchemaError(f"semantic attribute {self.id} needs a note")
        elif self.kind == "measure":
            if self.tool not in MEASURE_TOOLS:
                raise SchemaError(f"unknown measure tool {self.tool!r}")
            if self.tool == "ruler" and len(self.points) != 2:
                raise SchemaError("ruler measures take exactly 2 points")
            if self.tool == "tape" and len(self.points) < 2:
                raise SchemaError("tape measures take at least 2 points")
            if self.tool == "bounding":
                if self.direction is None:
                    raise SchemaError(
                        "direction is required for bounding measures"
                    )
                d = np.asarray(self.direction, dtype=np.float64)
                if abs(np.linalg.norm(d) - 1.0) > 1e-9:
                    raise SchemaError("bounding direction must be unit length")
            elif self.direction is not None:
                raise SchemaError(
                    f"direction is only valid for bounding, not {self.tool!r}"
                )
        else:
            raise SchemaError(f"unknown attribute type {self.kind!r}")


@dataclass(frozen=True)
class Annotation:
    """Typed selector over mesh elements plus tag, colour and attributes.

    selector data by type:
      point  -- `points`: vertex indices
      line   -- `polylines`: list of vertex index chains along mesh edges
      region -- `boundaries`: list of closed vertex loops; `interior` is the
                derived triangle set (never serialized)
    """

    id: int
    tag: str
    colour: tuple
    selector: str
    points: tuple = ()
    polylines: tuple = ()
    boundaries: tuple = ()
    attributes: tuple = ()
    interior: frozenset = field(default_factory=frozenset, compare=False)

    def vertex_set(self, mesh: TriangleMesh | None = None) -> set:
        """Vertices referenced by the selector (interior for regions)."""
        if self.selector == "point":
            return set(self.points)
        if self.selector == "line":
            return {v for pl in self.polylines for v in pl}
        verts = {v for lp in self.boundaries for v in lp}
        if mesh is not None:
            for t in self.interior:
                verts.update(int(v) for v in mesh.triangles[t])
        return verts


def _check_indices(mesh: TriangleMesh, indices):
    for v in indices:
        if not (0 <= v < mesh.vertex_count):
            raise InvalidIndex(f"vertex {v} out of range")


def _check_edge_chain(mesh: TriangleMesh, chain, what: str):
    _check_indices(mesh, chain)
    for a, b in zip(chain, chain[1:]):
        if a == b:
            continue
        if (min(a, b), max(a, b)) not in mesh.edge_index:
            raise InvalidIndex(f"{what}: ({a}, {b}) is not a mesh edge")


def region_interior(mesh: TriangleMesh, boundaries) -> frozenset:
    """Interior triangle set bounded by closed edge loops.

    Flood fills both sides of the first loop without crossing any boundary
    edge; the smaller fill wins, ties go to the side containing the lowest
    triangle index.
    """
    blocked = set()
    for loop in boundaries:
        if len(loop) < 3:
            raise OpenLoop(f"boundary loop has {len(loop)} vertices")
        closed = list(loop) + [loop[0]]
        _check_edge_chain(mesh, closed, "region boundary")
        for a, b in zip(closed, closed[1:]):
            if a != b:
                blocked.add((min(a, b), max(a, b)))

    first = boundaries[0]
    seed_edge = (min(first[0], first[1]), max(first[0], first[1]))
    seed_tris = mesh.edge_triangles[mesh.edge_index[seed_edge]]

    def flood(seed: int) -> frozenset:
        seen = {seed}
        stack = [seed]
        while stack:
            t = stack.pop()
            tri = mesh.triangles[t]
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(int(a), int(b)), max(int(a), int(b)))
                if key in blocked:
                    continue
                for nxt in mesh.edge_triangles[mesh.edge_index[key]]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return frozenset(seen)

    if len(seed_tris) == 1:
        # loop lies on the mesh boundary: single-sided fill
        interior = flood(seed_tris[0])
    else:
        fill_a = flood(seed_tris[0])
        fill_b = flood(seed_tris[1])
        if fill_a == fill_b:
            raise EmptyRegion("boundary loops do not separate the surface")
        if len(fill_a) != len(fill_b):
            interior = min(fill_a, fill_b, key=len)
        else:
            interior = fill_a if min(fill_a) < min(fill_b) else fill_b
    if not interior:
        raise EmptyRegion("region fill is empty")
    if region_boundary_edges(mesh, interior) != blocked:
        raise EmptyRegion(
            "interior boundary does not match the stored loops "
            "(loops do not jointly bound one region)"
        )
    return interior


def region_boundary_edges(mesh: TriangleMesh, triangles) -> set:
    """Edges bounding a triangle set: exactly one incident triangle inside."""
    count: dict[tuple, int] = {}
    for t in triangles:
        tri = mesh.triangles[t]
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            count[key] = count.get(key, 0) + 1
    return {e for e, c in count.items() if c == 1}


def create_annotation(
    mesh: TriangleMesh,
    selector: str,
    data,
    tag: str,
    colour=(255, 0, 0),
    ann_id: int | None = None,
    existing=(),
    attributes=(),
) -> Annotation:
    """Build and validate an annotation against a mesh.

    `data` is the selector payload: vertex list for "point", list of
    vertex chains for "line", list of closed loops for "region". A fresh
    id is chosen above the ids in `existing` unless `ann_id` is given.
    """
    if selector not in SELECTOR_TYPES:
        raise SchemaError(f"unknown selector type {selector!r}")
    if ann_id is None:
        used = {a.id for a in existing}
        ann_id = max(used, default=-1) + 1
    colour = tuple(int(c) for c in colour)
    if len(colour) != 3 or any(not 0 <= c <= 255 for c in colour):
        raise SchemaError(f"colour must be three 0-255 ints, got {colour}")

    kwargs = dict(
        id=int(ann_id), tag=tag, colour=colour, selector=selector,
        attributes=tuple(attributes),
    )
    if selector == "point":
        pts = tuple(int(v) for v in data)
        _check_indices(mesh, pts)
        kwargs["points"] = pts
    elif selector == "line":
        polylines = tuple(tuple(int(v) for v in pl) for pl in data)
        for pl in polylines:
            if len(pl) < 2:
                raise InvalidIndex("polyline needs at least 2 vertices")
            _check_edge_chain(mesh, pl, "polyline")
        kwargs["polylines"] = polylines
    else:
        boundaries = tuple(tuple(int(v) for v in lp) for lp in data)
        if not boundaries:
            raise OpenLoop("region needs at least one boundary loop")
        kwargs["boundaries"] = boundaries
        kwargs["interior"] = region_interior(mesh, boundaries)
    return Annotation(**kwargs)


# --- measures -------------------------------------------------------------


def measure_ruler(mesh: TriangleMesh, a: int, b: int) -> float:
    """Euclidean distance between two mesh vertices."""
    _check_indices(mesh, (a, b))
    return float(np.linalg.norm(mesh.vertices[b] - mesh.vertices[a]))


def measure_tape(mesh: TriangleMesh, picks) -> float:
    """Approximate geodesic: summed edge-graph shortest paths between
    successive picks."""
    picks = [int(p) for p in picks]
    if len(picks) < 2:
        raise InvalidIndex("tape needs at least 2 picks")
    _check_indices(mesh, picks)
    total = 0.0
    for a, b in zip(picks, picks[1:]):
        total += path_length(mesh, shortest_edge_path(mesh, a, b))
    return total


def measure_bounding(points, direction):
    """Extent of points projected on the line through their barycentre.

    Returns (length, (offset_min, offset_max)); the offsets position the
    two clipping planes used for display.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = np.asarray(direction, dtype=np.float64)
    nrm = np.linalg.norm(d)
    if nrm == 0:
        raise InvalidIndex("bounding direction must be nonzero")
    d = d / nrm
    bary = p.mean(axis=0)
    proj = (p - bary) @ d
    return float(proj.max() - proj.min()), (float(proj.min()), float(proj.max()))


def evaluate_measure(mesh: TriangleMesh, attr: Attribute) -> float:
    """Recompute a measure attribute's value from current geometry."""
    if attr.kind != "measure":
        raise SchemaError("not a measure attribute")
    if attr.tool == "ruler":
        return measure_ruler(mesh, attr.points[0], attr.points[1])
    if attr.tool == "tape":
        return measure_tape(mesh, attr.points)
    pts = mesh.vertices[np.asarray(attr.points, dtype=np.int64)]
    return measure_bounding(pts, attr.direction)[0]


def refresh_measures(mesh: TriangleMesh, annotation: Annotation) -> Annotation:
    """Recompute every measure attribute's cached value."""
    attrs = tuple(
        replace(a, value=evaluate_measure(mesh, a)) if a.kind == "measure" else a
        for a in annotation.attributes
    )
    return replace(annotation, attributes=attrs)


# --- JSON interchange -----------------------------------------------------


def _attr_to_json(attr: Attribute) -> dict:
    out = {"id": attr.id, "name": attr.name, "type": attr.kind}
    if attr.kind == "semantic":
        out["note"] = attr.note
    else:
        measure = {"tool": attr.tool, "points": list(attr.points)}
        if attr.tool == "bounding":
            measure["direction"] = [float(x) for x in attr.direction]
        out["measure"] = measure
    return out


def _ann_to_json(ann: Annotation) -> dict:
    out = {
        "id": ann.id,
        "tag": ann.tag,
        "colour": list(ann.colour),
        "attributes": [_attr_to_json(a) for a in ann.attributes],
        "type": ann.selector,
    }
    if ann.selector == "point":
        out["points"] = list(ann.points)
    elif ann.selector == "line":
        out["polylines"] = [list(pl) for pl in ann.polylines]
    else:
        out["boundaries"] = [list(lp) for lp in ann.boundaries]
    return out


def annotations_to_json(annotations) -> str:
    """Canonical serialization: schema key order, 2-space indent."""
    doc = {"annotations": [_ann_to_json(a) for a in annotations]}
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def write_annotations(annotations, path) -> None:
    ids = [a.id for a in annotations]
    if len(set(ids)) != len(ids):
        raise SchemaError("annotation ids must be unique")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(annotations_to_json(annotations))


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_attribute(obj: dict) -> Attribute:
    where = f"attribute {obj.get('id', '?')}"
    aid = _require(obj, "id", where)
    name = _require(obj, "name", where)
    kind = _require(obj, "type", where)
    if kind == "semantic":
        return Attribute(id=int(aid), name=name, kind="semantic",
                         note=_require(obj, "note", where))
    if kind == "measure":
        measure = _require(obj, "measure", where)
        tool = _require(measure, "tool", where)
        if tool not in MEASURE_TOOLS:
            raise SchemaError(f"{where}: unknown tool {tool!r}")
        points = tuple(int(p) for p in _require(measure, "points", where))
        direction = None
        if tool == "bounding":
            direction = tuple(
                float(x) for x in _require(measure, "direction", where)
            )
        elif "direction" in measure:
            raise SchemaError(
                f"{where}: direction is present but tool is {tool!r}"
            )
        return Attribute(id=int(aid), name=name, kind="measure", tool=tool,
                         points=points, direction=direction)
    raise SchemaError(f"{where}: unknown attribute type {kind!r}")


def read_annotations(path, mesh: TriangleMesh) -> list[Annotation]:
    """Parse an annotation file and bind it to `mesh`.

    Validates the schema, index ranges, edge chains and region loops;
    region interiors are re-derived and measure values recomputed.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    items = _require(doc, "annotations", "document")
    out = []
    seen_ids = set()
    for obj in items:
        where = f"annotation {obj.get('id', '?')}"
        aid = int(_require(obj, "id", where))
        if aid in seen_ids:
            raise SchemaError(f"{where}: duplicate id")
        seen_ids.add(aid)
        tag = _require(obj, "tag", where)
        colour = _require(obj, "colour", where)
        selector = _require(obj, "type", where)
        if selector not in SELECTOR_TYPES:
            raise SchemaError(f"{where}: unknown type value {selector!r}")
        attributes = tuple(_parse_attribute(a) for a in obj.get("attributes", []))
        key = {"point": "points", "line": "polylines", "region": "boundaries"}[
            selector
        ]
        data = _require(obj, key, where)
        try:
            ann = create_annotation(
                mesh, selector, data, tag, colour,
                ann_id=aid, attributes=attributes,
            )
        except InvalidIndex as exc:
            raise IndexOutOfRange(f"{where}: {exc}") from exc
        for attr in attributes:
            for v in attr.points:
                if not 0 <= v < mesh.vertex_count:
                    raise IndexOutOfRange(
                        f"{where}: measure vertex {v} out of range"
                    )
        out.append(refresh_measures(mesh, ann))
    return out


# --- transfer -------------------------------------------------------------


def _nearest_vertices(target: TriangleMesh, positions) -> list[int]:
    # lowest index wins on exact distance ties
    tree = cKDTree(target.vertices)
    k = min(4, target.vertex_count)
    dist, idx = tree.query(np.atleast_2d(positions), k=k)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    out = []
    for drow, irow in zip(dist, idx):
        tied = irow[drow == drow[0]]
        out.append(int(tied.min()))
    return out


def transfer_annotations(
    source: TriangleMesh, annotations, target: TriangleMesh
) -> list[Annotation]:
    """Remap annotations onto a different-resolution mesh of the same shape.

    Point selectors snap to the nearest target vertex; polylines re-chain
    mapped vertices with shortest edge paths; region boundaries transfer as
    chains, close, and re-derive their interior. Measures re-anchor and
    their cached values are recomputed.
    """
    s_lo, s_hi = source.bounding_box
    t_lo, t_hi = target.bounding_box
    if (t_hi < s_lo).any() or (s_hi < t_lo).any():
        warnings.warn("source and target bounding boxes do not overlap")

    out = []
    for ann in annotations:
        mapped = dict(id=ann.id, tag=ann.tag, colour=ann.colour,
                      selector=ann.selector)
        if ann.selector == "point":
            mapped["points"] = tuple(
                _nearest_vertices(target, source.vertices[list(ann.points)])
            )
        elif ann.selector == "line":
            mapped["polylines"] = tuple(
                tuple(_rechain(target, source, pl)) for pl in ann.polylines
            )
        else:
            loops = []
            for lp in ann.boundaries:
                chain = _rechain(target, source, tuple(lp) + (lp[0],))
                if chain[0] == chain[-1]:
                    chain = chain[:-1]
                if len(set(chain)) < 3:
                    raise LoopCollapse(
                        f"annotation {ann.id}: loop collapsed to "
                        f"{len(set(chain))} vertices"
                    )
                loops.append(tuple(chain))
            mapped["boundaries"] = tuple(loops)
            mapped["interior"] = region_interior(target, mapped["boundaries"])

        attrs = []
        for attr in ann.attributes:
            if attr.kind == "semantic":
                attrs.append(attr)
                continue
            pts = tuple(
                _nearest_vertices(target, source.vertices[list(attr.points)])
            )
            if attr.tool == "ruler":
                pts = pts[:2]
            moved = replace(attr, points=pts)
            attrs.append(replace(moved, value=evaluate_measure(target, moved)))
        mapped["attributes"] = tuple(attrs)
        out.append(Annotation(**mapped))
    return out


def _rechain(target: TriangleMesh, source: TriangleMesh, chain):
    images = _nearest_vertices(target, source.vertices[list(chain)])
    path = [images[0]]
    for a, b in zip(images, images[1:]):
        if a == b:
            continue
        try:
            seg = shortest_edge_path(target, a, b)
        except Unreachable as exc:
            raise LoopCollapse(f"cannot re-chain {a}->{b}: {exc}") from exc
        path.extend(seg[1:])
    # drop consecutive duplicates
    out = [path[0]]
    for v in path[1:]:
        if v != out[-1]:
            out.append(v)
    return out
