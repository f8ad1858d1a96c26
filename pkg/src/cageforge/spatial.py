"""Spatial queries shared across modules: exact closest points on a
triangle mesh (KD-tree accelerated) and generalized winding numbers."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh


def closest_point_on_triangles(points, a, b, c):
    """Closest points on triangles (a, b, c) for paired query points.

    All arguments are (k, 3); returns (k, 3) closest points. Vectorized
    version of the standard region-classification algorithm.
    """
    p = np.asarray(points, dtype=np.float64)
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)  # vertex a
    assign((d3 >= 0) & (d4 <= d3), b)  # vertex b
    assign((d6 >= 0) & (d5 <= d6), c)  # vertex c

    vc = d1 * d4 - d3 * d2
    with np.errstate(invalid="ignore", divide="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)  # edge ab

    vb = d5 * d2 - d1 * d6
    with np.errstate(invalid="ignore", divide="ignore"):
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)  # edge ac

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(invalid="ignore", divide="ignore"):
        w_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))

    denom = va + vb + vc
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
    assign(~done, a + v[:, None] * ab + w[:, None] * ac)  # interior
    return out


class MeshDistanceQuery:
    """Exact nearest point on a mesh via triangle-centroid KD-tree.

    Candidate triangles come from the `k` nearest centroids expanded until
    the best exact distance is provably minimal (centroid distance minus
    the largest triangle circumradius bounds the remaining candidates).
    """

    def __init__(self, mesh: TriangleMesh, k: int = 16):
        self.mesh = mesh
        t = mesh.triangles
        v = mesh.vertices
        self._corners = (v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])
        self._centroids = (self._corners[0] + self._corners[1] + self._corners[2]) / 3
        spread = np.maximum(
            np.linalg.norm(self._corners[0] - self._centroids, axis=1),
            np.maximum(
                np.linalg.norm(self._corners[1] - self._centroids, axis=1),
                np.linalg.norm(self._corners[2] - self._centroids, axis=1),
            ),
        )
        self._max_spread = float(spread.max()) if len(spread) else 0.0
        self._tree = cKDTree(self._centroids)
        self._k = min(k, len(self._centroids))

    def query(self, points):
        """Return (distances, closest points, triangle ids) for `points`."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = len(p)
        best_d = np.full(n, np.inf)
        best_p = np.zeros_like(p)
        best_t = np.full(n, -1, dtype=np.int64)
        k = self._k
        active = np.arange(n)
        while len(active):
            cd, ci = self._tree.query(p[active], k=k)
            cd = np.atleast_2d(cd)
            ci = np.atleast_2d(ci)
            flat_pts = np.repeat(p[active], ci.shape[1], axis=0)
            flat_tri = ci.ravel()
            cp = closest_point_on_triangles(
                flat_pts,
                self._corners[0][flat_tri],
                self._corners[1][flat_tri],
                self._corners[2][flat_tri],
            )
            d = np.linalg.norm(cp - flat_pts, axis=1).reshape(ci.shape)
            arg = d.argmin(axis=1)
            rows = np.arange(len(active))
            best_d[active] = d[rows, arg]
            best_p[active] = cp.reshape(*ci.shape, 3)[rows, arg]
            best_t[active] = ci[rows, arg]
            if k >= len(self._centroids):
                break
            # a farther triangle can only win if its centroid is closer
            # than best + max spread; re-query unresolved points
            guaranteed = best_d[active] <= cd[:, -1] - self._max_spread
            active = active[~guaranteed]
            k = min(k * 4, len(self._centroids))
        return best_d, best_p, best_t


def solid_angles(triangles_a, triangles_b, triangles_c, points):
    """Signed solid angles of triangles seen from points.

    Arguments are broadcast: triangle corners (m, 3) each, points (n, 3);
    returns (n, m). The sign follows the triangle winding; a closed mesh
    with outward-wound triangles sums to 4*pi for interior points.
    """
    p = np.asarray(points, dtype=np.float64)[:, None, :]
    r1 = triangles_a[None, :, :] - p
    r2 = triangles_b[None, :, :] - p
    r3 = triangles_c[None, :, :] - p
    l1 = np.linalg.norm(r1, axis=2)
    l2 = np.linalg.norm(r2, axis=2)
    l3 = np.linalg.norm(r3, axis=2)
    num = np.einsum("nmi,nmi->nm", r1, np.cross(r2, r3))
    den = (
        l1 * l2 * l3
        + np.einsum("nmi,nmi->nm", r1, r2) * l3
        + np.einsum("nmi,nmi->nm", r2, r3) * l1
        + np.einsum("nmi,nmi->nm", r3, r1) * l2
    )
    return 2.0 * np.arctan2(num, den)


def winding_numbers(mesh: TriangleMesh, points, chunk: int = 2048) -> np.ndarray:
    """Generalized winding number of `points` w.r.t. the mesh surface.

    ~1 inside a closed outward-wound mesh, ~0 outside.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    t = mesh.triangles
    v = mesh.vertices
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    out = np.empty(len(p))
    for s in range(0, len(p), chunk):
        omega = solid_angles(a, b, c, p[s : s + chunk])
        out[s : s + chunk] = omega.sum(axis=1) / (4 * np.pi)
    return out


def signed_distances(mesh: TriangleMesh, points) -> np.ndarray:
    """Signed distance to a closed mesh: negative inside, positive outside."""
    d, _, _ = MeshDistanceQuery(mesh).query(points)
    w = winding_numbers(mesh, points)
    return np.where(w > 0.5, -d, d)
