"""Cage generation: resample-and-offset via a signed-distance grid and
marching cubes, then quadric edge collapse down to a target face count."""

from __future__ import annotations

import heapq
from collections import defaultdict

import numpy as np
from scipy import ndimage
from skimage.measure import marching_cubes

from .errors import PreconditionError, TargetTooCoarse, TopologyChange
from .mesh import TriangleMesh
from .spatial import MeshDistanceQuery, winding_numbers

DEFAULT_OFFSET_FRACTION = 0.55


def offset_distance(template: TriangleMesh, fraction: float) -> float:
    """Offset used for cage generation: fraction of (bbox diagonal / 10)."""
    return fraction * template.diagonal / 10.0


def generate_cage(
    template: TriangleMesh,
    offset_fraction: float = DEFAULT_OFFSET_FRACTION,
    target_faces: int = 100,
    cells_per_offset: int = 3,
    max_grid_dim: int = 80,
) -> TriangleMesh:
    """Closed coarse cage enclosing the template.

    Extracts the iso-surface of the template's signed distance at the
    offset (grid resolution >= `cells_per_offset` cells per offset
    distance), keeps the component enclosing the template, and decimates
    with topology-preserving quadric edge collapses.
    """
    if offset_fraction <= 0:
        raise PreconditionError("offset fraction must be positive")
    if not template.is_closed:
        raise PreconditionError("cage generation needs a closed template")
    if target_faces < 4:
        raise TargetTooCoarse("cannot decimate below 4 faces")

    offset = offset_distance(template, offset_fraction)
    surface = _offset_surface(template, offset, cells_per_offset, max_grid_dim)
    surface = _enclosing_component(surface, template)

    cage = decimate_qem(surface, target_faces)
    tg = template.genus()
    cg = cage.genus()
    if cg != tg:
        raise TopologyChange(tg, cg)
    return cage


def _offset_surface(template, offset, cells_per_offset, max_grid_dim):
    lo, hi = template.bounding_box
    cell = offset / cells_per_offset
    pad = offset + 3 * cell
    extent = (hi - lo) + 2 * pad
    if extent.max() / cell > max_grid_dim:
        cell = extent.max() / max_grid_dim
        pad = offset + 3 * cell
        extent = (hi - lo) + 2 * pad
    dims = np.maximum(np.ceil(extent / cell).astype(int) + 1, 8)
    origin = lo - pad

    axes = [origin[k] + cell * np.arange(dims[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    query = MeshDistanceQuery(template)
    dist = np.empty(len(pts))
    step = 65536
    for s in range(0, len(pts), step):
        dist[s : s + step] = query.query(pts[s : s + step])[0]
    dist = dist.reshape(dims)

    # sign by connectivity: cells farther than a cell diagonal from the
    # surface are safely labeled by flood fill from the grid border; the
    # iso level sits >= cells_per_offset cells away, so near-surface signs
    # never influence the extracted surface
    far = dist > cell * np.sqrt(3.0)
    labels, _ = ndimage.label(far)
    border = np.unique(
        np.concatenate(
            [
                labels[0].ravel(), labels[-1].ravel(),
                labels[:, 0].ravel(), labels[:, -1].ravel(),
                labels[:, :, 0].ravel(), labels[:, :, -1].ravel(),
            ]
        )
    )
    outside = np.isin(labels, border[border > 0])
    signed = np.where(far & ~outside, -dist, dist)

    verts, faces, _, _ = marching_cubes(signed, level=offset, spacing=(cell,) * 3)
    mesh = TriangleMesh(verts + origin, faces.astype(np.int64))
    # orient outward: winding at an interior template vertex must be +1
    probe = template.vertices[:1]
    if winding_numbers(mesh, probe)[0] < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def _enclosing_component(mesh: TriangleMesh, template: TriangleMesh):
    labels = mesh.connected_components
    count = int(labels.max()) + 1
    if count == 1:
        return mesh
    probe = template.vertices[:1]
    best = None
    for comp in range(count):
        keep = np.flatnonzero(labels == comp)
        remap = -np.ones(mesh.vertex_count, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        tri_mask = np.isin(mesh.triangles[:, 0], keep)
        tris = remap[mesh.triangles[tri_mask]]
        sub = TriangleMesh(mesh.vertices[keep], tris)
        w = winding_numbers(sub, probe)[0]
        if best is None or abs(w - 1.0) < best[0]:
            best = (abs(w - 1.0), sub)
    return best[1]


# --- quadric edge collapse ---------------------------------------------------


def decimate_qem(mesh: TriangleMesh, target_faces: int) -> TriangleMesh:
    """Garland-Heckbert quadric decimation preserving topology.

    Collapses are rejected unless the edge link condition holds (the
    common neighbors of the endpoints are exactly the two opposite
    vertices), so genus and manifoldness are preserved. Raises
    TargetTooCoarse when no legal collapse remains above the target.
    """
    if target_faces < 4:
        raise TargetTooCoarse("cannot decimate below 4 faces")
    verts = [tuple(map(float, v)) for v in mesh.vertices]
    faces = [list(map(int, t)) for t in mesh.triangles]
    alive_face = [True] * len(faces)
    vert_faces = defaultdict(set)
    for k, f in enumerate(faces):
        for v in f:
            vert_faces[v].add(k)

    def _tri_normal(f):
        (ax, ay, az), (bx, by, bz), (cx, cy, cz) = (verts[i] for i in f)
        ux, uy, uz = bx - ax, by - ay, bz - az
        vx, vy, vz = cx - ax, cy - ay, cz - az
        return uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx

    # per-vertex quadrics as symmetric 4x4 upper-triangle tuples
    quadrics = [np.zeros(10) for _ in verts]
    for f in faces:
        nx, ny, nz = _tri_normal(f)
        norm = (nx * nx + ny * ny + nz * nz) ** 0.5
        if norm == 0:
            continue
        nx, ny, nz = nx / norm, ny / norm, nz / norm
        ax, ay, az = verts[f[0]]
        d = -(nx * ax + ny * ay + nz * az)
        q = np.array(
            [nx * nx, nx * ny, nx * nz, nx * d,
             ny * ny, ny * nz, ny * d,
             nz * nz, nz * d, d * d]
        )
        for i in f:
            quadrics[i] += q

    def _q_eval(q, x, y, z):
        return (
            q[0] * x * x + 2 * q[1] * x * y + 2 * q[2] * x * z + 2 * q[3] * x
            + q[4] * y * y + 2 * q[5] * y * z + 2 * q[6] * y
            + q[7] * z * z + 2 * q[8] * z
            + q[9]
        )

    version = defaultdict(int)
    n_alive = sum(alive_face)

    def neighbors(u):
        out = set()
        for k in vert_faces[u]:
            out.update(faces[k])
        out.discard(u)
        return out

    def collapse_cost(u, v):
        q = quadrics[u] + quadrics[v]
        (ux, uy, uz), (vx, vy, vz) = verts[u], verts[v]
        mid = ((ux + vx) / 2, (uy + vy) / 2, (uz + vz) / 2)
        candidates = [mid, verts[u], verts[v]]
        # optimal position: solve the 3x3 system by Cramer's rule
        a, b, c = q[0] + 1e-12, q[1], q[2]
        e, f_, g = q[4] + 1e-12, q[5], q[6]
        h_, i_ = q[7] + 1e-12, q[8]
        det = a * (e * h_ - f_ * f_) - b * (b * h_ - f_ * c) + c * (b * f_ - e * c)
        if abs(det) > 1e-30:
            rx, ry, rz = -q[3], -g, -i_
            ox = (rx * (e * h_ - f_ * f_) - b * (ry * h_ - f_ * rz)
                  + c * (ry * f_ - e * rz)) / det
            oy = (a * (ry * h_ - rz * f_) - rx * (b * h_ - f_ * c)
                  + c * (b * rz - ry * c)) / det
            oz = (a * (e * rz - ry * f_) - b * (b * rz - ry * c)
                  + rx * (b * f_ - e * c)) / det
            local = ((ux - vx) ** 2 + (uy - vy) ** 2 + (uz - vz) ** 2) ** 0.5
            dmid = ((ox - mid[0]) ** 2 + (oy - mid[1]) ** 2
                    + (oz - mid[2]) ** 2) ** 0.5
            if dmid < 4 * max(local, 1e-12):
                candidates.insert(0, (ox, oy, oz))
        best = None
        for p in candidates:
            cost = _q_eval(q, *p)
            if best is None or cost < best[0]:
                best = (cost, p)
        return best

    heap = []
    edges = set()
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edges.add((min(a, b), max(a, b)))
    for u, v in edges:
        cost, pos = collapse_cost(u, v)
        heapq.heappush(heap, (cost, version[u], version[v], u, v, pos))

    def link_ok(u, v):
        shared_faces = vert_faces[u] & vert_faces[v]
        if len(shared_faces) != 2:
            return False
        opposite = set()
        for k in shared_faces:
            opposite.update(x for x in faces[k] if x not in (u, v))
        return neighbors(u) & neighbors(v) == opposite

    def creates_flip(u, v, pos):
        for k in vert_faces[u] | vert_faces[v]:
            if not alive_face[k]:
                continue
            f = faces[k]
            if u in f and v in f:
                continue
            ox, oy, oz = _tri_normal(f)
            coords = [pos if i in (u, v) else verts[i] for i in f]
            (ax, ay, az), (bx, by, bz), (cx, cy, cz) = coords
            e1x, e1y, e1z = bx - ax, by - ay, bz - az
            e2x, e2y, e2z = cx - ax, cy - ay, cz - az
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            if ox * nx + oy * ny + oz * nz <= 0:
                return True
        return False

    while n_alive > target_faces and heap:
        cost, vu, vv, u, v, pos = heapq.heappop(heap)
        if version[u] != vu or version[v] != vv:
            continue
        if not vert_faces[u] or not vert_faces[v]:
            continue
        if not link_ok(u, v) or creates_flip(u, v, pos):
            continue
        # collapse v into u at pos
        verts[u] = tuple(map(float, pos))
        quadrics[u] = quadrics[u] + quadrics[v]
        for k in list(vert_faces[u] & vert_faces[v]):
            alive_face[k] = False
            n_alive -= 1
            for w in faces[k]:
                vert_faces[w].discard(k)
        for k in list(vert_faces[v]):
            faces[k] = [u if x == v else x for x in faces[k]]
            vert_faces[u].add(k)
        vert_faces[v].clear()
        # only edges incident to u changed; lazy entries elsewhere stay valid
        version[u] += 1
        version[v] += 1
        for w in sorted(neighbors(u)):
            c, p = collapse_cost(u, w)
            if c == c and c != float("inf"):
                heapq.heappush(
                    heap,
                    (c, version[min(u, w)], version[max(u, w)],
                     min(u, w), max(u, w), p),
                )

    if n_alive > target_faces + 4:
        raise TargetTooCoarse(
            f"decimation deadlocked at {n_alive} faces (target {target_faces})"
        )

    keep = [k for k in range(len(faces)) if alive_face[k]]
    used = sorted({v for k in keep for v in faces[k]})
    remap = {v: i for i, v in enumerate(used)}
    out_verts = np.array([verts[v] for v in used])
    out_faces = [[remap[v] for v in faces[k]] for k in keep]
    return TriangleMesh(out_verts, out_faces)
