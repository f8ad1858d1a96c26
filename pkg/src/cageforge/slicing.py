"""Plane slicing, slice descriptors and an approximate medial axis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi
from shapely.geometry import MultiPoint, Point, Polygon

from .errors import DegenerateLoop, NoClosedLoop, PreconditionError
from .mesh import TriangleMesh

_ON_PLANE_NUDGE = 1e-12


@dataclass(frozen=True)
class PlaneSlice:
    """Cross-section of a mesh with a plane.

    `loops` are closed polylines (first point not repeated at the end);
    `chains` are open polylines produced only by meshes with boundary.
    Segments are oriented by (triangle normal x plane normal), so outer
    contours and holes wind in opposite directions in plane coordinates.
    """

    normal: np.ndarray
    offset: float
    loops: list = field(default_factory=list)
    chains: list = field(default_factory=list)

    def plane_basis(self):
        """Deterministic orthonormal in-plane basis (u, v)."""
        n = self.normal
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        u = np.cross(n, e)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    def to_plane_coords(self, points):
        """Project 3D on-plane points into 2D plane coordinates."""
        u, v = self.plane_basis()
        p = np.asarray(points, dtype=np.float64)
        return np.column_stack([p @ u, p @ v])


def slice_by_plane(mesh: TriangleMesh, normal, offset: float) -> PlaneSlice:
    """Intersect a mesh with the plane ``normal . x = offset``.

    Each triangle crossing the plane contributes one segment; segments are
    chained into loops/chains through shared crossing edges. Vertices that
    land exactly on the plane are nudged to the positive side before
    classification, so chaining never sees T-junctions.
    """
    n = np.asarray(normal, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise PreconditionError("plane normal must be nonzero")
    n = n / norm
    offset = float(offset) / norm

    side = mesh.vertices @ n - offset
    nudge = _ON_PLANE_NUDGE * max(mesh.diagonal, 1.0)
    side = np.where(np.abs(side) < nudge, nudge, side)

    tri_sides = side[mesh.triangles]
    crossing = ~((tri_sides > 0).all(axis=1) | (tri_sides < 0).all(axis=1))
    if not crossing.any():
        return PlaneSlice(normal=n, offset=offset)

    # One intersection point per crossing edge, interpolated low->high
    # vertex index so both incident triangles see the identical point.
    def edge_point(key):
        p = points.get(key)
        if p is None:
            a, b = key
            t = side[a] / (side[a] - side[b])
            p = mesh.vertices[a] + t * (mesh.vertices[b] - mesh.vertices[a])
            points[key] = p
        return p

    points: dict[tuple, np.ndarray] = {}
    # Per crossing triangle: entry/exit edge keys, segment oriented along
    # (triangle normal x plane normal).
    entry_of: dict[tuple, int] = {}  # entry edge key -> triangle
    seg: dict[int, tuple] = {}  # triangle -> (entry_key, exit_key)
    for k in np.flatnonzero(crossing):
        tri = mesh.triangles[k]
        keys = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if (tri_sides[k, a] > 0) != (tri_sides[k, b] > 0):
                keys.append((min(int(tri[a]), int(tri[b])), max(int(tri[a]), int(tri[b]))))
        if len(keys) != 2:
            continue
        direction = np.cross(mesh.triangle_normals[k], n)
        if (edge_point(keys[1]) - edge_point(keys[0])) @ direction < 0:
            keys = [keys[1], keys[0]]
        seg[int(k)] = (keys[0], keys[1])
        entry_of[keys[0]] = int(k)

    exit_of = {s[1]: k for k, s in seg.items()}

    visited: set[int] = set()
    loops, chains = [], []
    for start in sorted(seg):
        if start in visited:
            continue
        visited.add(start)
        entry_key, exit_key = seg[start]
        pts = [edge_point(entry_key), edge_point(exit_key)]
        closed = False
        cur_exit = exit_key
        while True:  # forward walk
            nxt = entry_of.get(cur_exit)
            if nxt is None or (nxt in visited and nxt != start):
                break
            if nxt == start:
                closed = True
                break
            visited.add(nxt)
            cur_exit = seg[nxt][1]
            pts.append(edge_point(cur_exit))
        if closed:
            loops.append(np.array(pts[:-1]))
            continue
        cur_entry = entry_key
        back = []
        while True:  # backward walk for open chains
            prv = exit_of.get(cur_entry)
            if prv is None or prv in visited:
                break
            visited.add(prv)
            cur_entry = seg[prv][0]
            back.append(edge_point(cur_entry))
        chains.append(np.array(back[::-1] + pts))
    return PlaneSlice(normal=n, offset=offset, loops=loops, chains=chains)


def _closed_loops_2d(slice_: PlaneSlice):
    if not slice_.loops:
        raise NoClosedLoop("slice has no closed loop")
    return [slice_.to_plane_coords(lp) for lp in slice_.loops]


def _signed_area_centroid(poly2d):
    x, y = poly2d[:, 0], poly2d[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, poly2d.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6 * area)
    cy = ((y + yn) * cross).sum() / (6 * area)
    return float(area), np.array([cx, cy])


def slice_descriptors(slice_: PlaneSlice) -> dict:
    """Perimeter, enclosed area, centroid and in-plane OBB extents.

    Area uses the shoelace formula per loop; loops winding opposite to the
    outer contour (holes) subtract. The centroid is area-weighted and
    reported in 3D. Requires at least one closed loop.
    """
    loops2d = _closed_loops_2d(slice_)
    perimeter = 0.0
    for lp in slice_.loops:
        closed = np.vstack([lp, lp[:1]])
        perimeter += float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())

    areas, centroids = [], []
    for poly in loops2d:
        a, c = _signed_area_centroid(poly)
        areas.append(a)
        centroids.append(c)
    total = sum(areas)
    if total == 0.0:
        centroid2d = np.mean(centroids, axis=0)
    else:
        centroid2d = sum(a * c for a, c in zip(areas, centroids)) / total

    u, v = slice_.plane_basis()
    centroid3d = centroid2d[0] * u + centroid2d[1] * v + slice_.offset * slice_.normal

    # in-plane OBB by rotating calipers (minimum-area rectangle): unlike
    # PCA this is rigid-motion invariant even for symmetric sections
    rect = MultiPoint([tuple(p) for p in np.vstack(loops2d)]).minimum_rotated_rectangle
    coords = np.asarray(rect.exterior.coords) if rect.geom_type == "Polygon" else None
    if coords is None:  # degenerate: collinear section
        pts = np.vstack(loops2d)
        span = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
        extents = [float(span), 0.0]
    else:
        e1 = float(np.linalg.norm(coords[1] - coords[0]))
        e2 = float(np.linalg.norm(coords[2] - coords[1]))
        extents = [e1, e2]

    return {
        "perimeter": perimeter,
        "area": abs(total),
        "centroid": centroid3d.tolist(),
        "obb_extents": sorted(extents, reverse=True),
    }


def _resample_loop(poly2d, step: float):
    closed = np.vstack([poly2d, poly2d[:1]])
    seg = np.diff(closed, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    total = seglen.sum()
    count = max(int(np.ceil(total / step)), 8)
    targets = np.linspace(0.0, total, count, endpoint=False)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    out = np.empty((count, 2))
    j = 0
    for i, s in enumerate(targets):
        while cum[j + 1] < s:
            j += 1
        t = (s - cum[j]) / seglen[j] if seglen[j] > 0 else 0.0
        out[i] = closed[j] + t * seg[j]
    return out


def approximate_medial_axis(
    slice_: PlaneSlice, sampling_step: float, pruning_angle_deg: float
) -> list:
    """Medial-axis approximation of the slice's outer loop.

    The boundary is resampled at `sampling_step`; Voronoi edges of the
    samples whose endpoints lie strictly inside the loop approximate the
    axis. An edge survives pruning only when its defining sample pair
    subtends at least `pruning_angle_deg` at both of its Voronoi vertices,
    so larger angles keep only the stable core of the axis.

    Returns a list of 2D segments ((x1, y1), (x2, y2)) in plane coords.
    """
    if sampling_step <= 0:
        raise PreconditionError("sampling step must be positive")
    loops2d = _closed_loops_2d(slice_)
    outer = max(loops2d, key=lambda p: abs(_signed_area_centroid(p)[0]))
    polygon = Polygon(outer)
    if not polygon.is_valid:
        raise DegenerateLoop("outer slice loop is self-intersecting")

    samples = _resample_loop(outer, sampling_step)
    vor = Voronoi(samples)
    inside = np.array([polygon.contains(Point(p)) for p in vor.vertices])

    threshold = np.deg2rad(pruning_angle_deg)
    segments = []
    for (p_idx, q_idx), (v_a, v_b) in zip(vor.ridge_points, vor.ridge_vertices):
        if v_a < 0 or v_b < 0:
            continue
        if not (inside[v_a] and inside[v_b]):
            continue
        p, q = samples[p_idx], samples[q_idx]
        angle = np.pi
        for v in (vor.vertices[v_a], vor.vertices[v_b]):
            da, db = p - v, q - v
            na, nb = np.linalg.norm(da), np.linalg.norm(db)
            if na == 0 or nb == 0:
                continue
            c = np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0)
            angle = min(angle, float(np.arccos(c)))
        if angle >= threshold:
            segments.append((tuple(vor.vertices[v_a]), tuple(vor.vertices[v_b])))
    return segments
