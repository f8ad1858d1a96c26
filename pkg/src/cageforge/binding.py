"""Generalized barycentric coordinates binding a template to a cage.

Mean-value coordinates use the spherical-projection formulation for
closed triangle cages. Green coordinates pair per-vertex weights with
per-face coordinates; both integrals (single-layer potential and hat-
weighted solid angle) are evaluated in closed form via per-edge terms,
so rest reproduction is exact to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ConnectivityMismatch,
    CountMismatch,
    ExteriorVertex,
    NumericalBreakdown,
    PreconditionError,
    RotateSingleVertex,
    SchemaError,
)
from .mesh import TriangleMesh
from .spatial import MeshDistanceQuery, solid_angles, winding_numbers

MVC = "Mean Value Coordinates"
GC = "Green Coordinates"

_SPARSITY_EPS = 1e-12
_ON_SURFACE_EPS = 1e-12
_CHUNK = 256


@dataclass
class CoordinateMatrix:
    """Dense GBC binding between a template and a cage.

    `vertex_weights` has one row per template vertex and one column per
    cage vertex (MVC weights, or the per-vertex part of GC). For GC,
    `face_weights` holds the per-face coordinates multiplying the scaled
    face normals. `rest_cage` round-trips through memory only; the text
    format stores just the matrix, so re-attach the cage after reading.
    """

    method: str
    vertex_weights: np.ndarray
    face_weights: np.ndarray
    counts: tuple
    cage_triangles: np.ndarray | None = None
    rest_cage: np.ndarray | None = None

    @property
    def is_mvc(self) -> bool:
        return self.method == MVC

    def attach_cage(self, cage: TriangleMesh) -> None:
        """Re-bind the rest cage (needed after reading GC from a file)."""
        if cage.vertex_count != self.counts[1]:
            raise CountMismatch(
                f"cage has {cage.vertex_count} vertices, binding expects "
                f"{self.counts[1]}"
            )
        if self.counts[2] and cage.triangle_count != self.counts[2]:
            raise CountMismatch(
                f"cage has {cage.triangle_count} faces, binding expects "
                f"{self.counts[2]}"
            )
        self.cage_triangles = cage.triangles
        self.rest_cage = cage.vertices


def _snap_rows(template: TriangleMesh, cage: TriangleMesh):
    """Template vertices on the cage surface snap to the nearest cage
    vertex's indicator row. Returns (snap mask, snapped cage vertex)."""
    dist, _, _ = MeshDistanceQuery(cage).query(template.vertices)
    on_surface = dist <= _ON_SURFACE_EPS * max(cage.diagonal, 1.0)
    snapped = np.full(template.vertex_count, -1, dtype=np.int64)
    if on_surface.any():
        tree = cKDTree(cage.vertices)
        _, nearest = tree.query(template.vertices[on_surface])
        snapped[on_surface] = nearest
    return on_surface, snapped


def _check_cage(cage: TriangleMesh):
    if not cage.is_closed:
        raise PreconditionError("cage must be a closed manifold")


def check_cage_encloses(cage: TriangleMesh, template: TriangleMesh) -> np.ndarray:
    """Indices of template vertices not strictly inside the cage."""
    w = winding_numbers(cage, template.vertices)
    return np.flatnonzero(w < 0.5)


def compute_mvc(template: TriangleMesh, cage: TriangleMesh) -> CoordinateMatrix:
    """3D mean-value weights of template vertices w.r.t. a closed cage.

    Rows are normalized to sum to one. Vertices outside the cage get
    valid (sign-mixed) weights with a warning; rows whose weight sum
    vanishes raise NumericalBreakdown.
    """
    _check_cage(cage)
    on_surface, snapped = _snap_rows(template, cage)
    outside = check_cage_encloses(cage, template)
    outside = outside[~on_surface[outside]]
    if outside.size:
        warnings.warn(
            f"{outside.size} template vertices outside the cage "
            f"(first: {outside[:5].tolist()}); MVC extends outside but "
            "loses positivity"
        )

    nv = template.vertex_count
    n = cage.vertex_count
    tri = cage.triangles
    scatter = [_one_hot(tri[:, k], n) for k in range(3)]
    W = np.zeros((nv, n))
    todo = np.flatnonzero(~on_surface)
    for s in range(0, len(todo), _CHUNK):
        rows = todo[s : s + _CHUNK]
        W[rows] = _mvc_chunk(template.vertices[rows], cage, scatter)
    for i in np.flatnonzero(on_surface):
        W[i, snapped[i]] = 1.0

    sums = W.sum(axis=1)
    bad = np.abs(sums) < 1e-12 * (1.0 + np.abs(W).sum(axis=1))
    if bad.any():
        raise NumericalBreakdown(
            f"mean-value weight sum vanished for template vertices "
            f"{np.flatnonzero(bad)[:5].tolist()}"
        )
    W /= sums[:, None]
    return CoordinateMatrix(
        method=MVC,
        vertex_weights=W,
        face_weights=np.zeros((nv, 0)),
        counts=(nv, n, cage.triangle_count),
        cage_triangles=cage.triangles,
        rest_cage=cage.vertices,
    )


def _one_hot(indices, n):
    m = np.zeros((len(indices), n))
    m[np.arange(len(indices)), indices] = 1.0
    return m


def _mvc_chunk(points, cage: TriangleMesh, scatter):
    """Mean-value weights for a chunk of points (spherical projection)."""
    eps = 1e-10
    x = np.asarray(points)
    p = len(x)
    c = cage.vertices
    tri = cage.triangles

    diff = c[None, :, :] - x[:, None, :]  # (p, n, 3)
    d = np.linalg.norm(diff, axis=2)
    d = np.maximum(d, 1e-300)
    u = diff / d[..., None]

    uk = [u[:, tri[:, k], :] for k in range(3)]  # (p, m, 3) each
    dk = [d[:, tri[:, k]] for k in range(3)]

    l = [np.linalg.norm(uk[(k + 1) % 3] - uk[(k + 2) % 3], axis=2) for k in range(3)]
    theta = [2.0 * np.arcsin(np.clip(lk / 2.0, 0.0, 1.0)) for lk in l]
    h = (theta[0] + theta[1] + theta[2]) / 2.0

    on_face = (np.pi - h) < eps

    sin_t = [np.sin(t) for t in theta]
    sin_h = np.sin(h)
    det = np.einsum("pmi,pmi->pm", uk[0], np.cross(uk[1], uk[2]))
    sign = np.where(det >= 0, 1.0, -1.0)

    ck, sk = [], []
    for k in range(3):
        denom = sin_t[(k + 1) % 3] * sin_t[(k + 2) % 3]
        with np.errstate(invalid="ignore", divide="ignore"):
            cv = np.where(
                denom > 0, 2.0 * sin_h * np.sin(h - theta[k]) / denom - 1.0, -1.0
            )
        cv = np.clip(cv, -1.0, 1.0)
        ck.append(cv)
        sk.append(sign * np.sqrt(np.maximum(1.0 - cv * cv, 0.0)))

    valid = ~on_face
    for k in range(3):
        valid &= np.abs(sk[k]) > eps

    W = np.zeros((p, cage.vertex_count))
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        with np.errstate(invalid="ignore", divide="ignore"):
            w = (theta[k] - ck[k1] * theta[k2] - ck[k2] * theta[k1]) / (
                dk[k] * sin_t[k1] * sk[k2]
            )
        w = np.where(valid, w, 0.0)
        W += w @ scatter[k]

    # points numerically on a cage face: 2D barycentric on that face only
    hit_rows, hit_tris = np.nonzero(on_face)
    handled = set()
    for row, t in zip(hit_rows, hit_tris):
        if row in handled:
            continue
        handled.add(row)
        W[row] = 0.0
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            W[row, tri[t, k]] = sin_t[k][row, t] * dk[k2][row, t] * dk[k1][row, t]
    return W


# --- Green coordinates -----------------------------------------------------


def compute_gc(template: TriangleMesh, cage: TriangleMesh) -> CoordinateMatrix:
    """Green coordinates: per-vertex weights plus per-face coordinates.

    Reconstruction at rest (unit face scaling) reproduces the template to
    rounding. Template vertices outside the cage are unsupported.
    """
    _check_cage(cage)
    on_surface, snapped = _snap_rows(template, cage)
    outside = check_cage_encloses(cage, template)
    outside = outside[~on_surface[outside]]
    if outside.size:
        raise ExteriorVertex(
            f"{outside.size} template vertices outside the cage "
            f"(first: {outside[:5].tolist()}); Green coordinates are "
            "interior-only"
        )

    nv = template.vertex_count
    n = cage.vertex_count
    m = cage.triangle_count
    tri = cage.triangles
    scatter = [_one_hot(tri[:, k], n) for k in range(3)]

    phi = np.zeros((nv, n))
    psi = np.zeros((nv, m))
    todo = np.flatnonzero(~on_surface)
    chunk = max(_CHUNK // 2, 16)
    for s in range(0, len(todo), chunk):
        rows = todo[s : s + chunk]
        ph, ps = _gc_chunk(template.vertices[rows], cage, scatter)
        phi[rows] = ph
        psi[rows] = ps
    for i in np.flatnonzero(on_surface):
        phi[i, snapped[i]] = 1.0

    return CoordinateMatrix(
        method=GC,
        vertex_weights=phi,
        face_weights=psi,
        counts=(nv, n, m),
        cage_triangles=cage.triangles,
        rest_cage=cage.vertices,
    )


def _gc_chunk(points, cage: TriangleMesh, scatter):
    x = np.asarray(points)
    v = cage.vertices
    tri = cage.triangles
    A, B, C = v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]
    N = np.cross(B - A, C - A)
    two_area = np.linalg.norm(N, axis=1)
    nrm = N / two_area[:, None]  # (m, 3)

    h = np.einsum("pmi,mi->pm", x[:, None, :] - A[None], nrm)  # (p, m)
    q = x[:, None, :] - h[..., None] * nrm[None]  # (p, m, 3)

    single = np.zeros(h.shape)  # integral of 1/r over each face
    grad = np.zeros(q.shape)  # sum of edge-normal * delta-log terms
    abs_h = np.abs(h)
    for a, b in ((A, B), (B, C), (C, A)):
        e = b - a
        elen = np.linalg.norm(e, axis=1)
        s_hat = e / elen[:, None]
        m_hat = np.cross(s_hat, nrm)  # in-plane outward edge normal
        t_e = np.einsum("pmi,mi->pm", a[None] - q, m_hat)
        foot = q + t_e[..., None] * m_hat[None]
        s_a = np.einsum("pmi,mi->pm", a[None] - foot, s_hat)
        s_b = np.einsum("pmi,mi->pm", b[None] - foot, s_hat)
        c2 = t_e * t_e + h * h
        r_a = np.sqrt(s_a * s_a + c2)
        r_b = np.sqrt(s_b * s_b + c2)
        # stable log of (s_b + r_b) / (s_a + r_a)
        with np.errstate(invalid="ignore", divide="ignore"):
            dlog = np.where(
                s_a + s_b > 0,
                np.log(np.maximum(s_b + r_b, 1e-300) / np.maximum(s_a + r_a, 1e-300)),
                np.log(np.maximum(r_a - s_a, 1e-300) / np.maximum(r_b - s_b, 1e-300)),
            )
        grad += m_hat[None] * dlog[..., None]
        abs_t = np.abs(t_e)
        safe = abs_t > 1e-14 * elen[None]
        with np.errstate(invalid="ignore", divide="ignore"):
            atan_part = (
                np.arctan(s_b * abs_h / (abs_t * r_b))
                - np.arctan(s_a * abs_h / (abs_t * r_a))
                - np.arctan(s_b / abs_t)
                + np.arctan(s_a / abs_t)
            )
        contrib = t_e * dlog + np.sign(t_e) * abs_h * np.where(safe, atan_part, 0.0)
        single += np.where(safe, contrib, 0.0)

    psi = single / (4 * np.pi)
    omega = solid_angles(A, B, C, x)  # (p, m), matches winding normals
    grad = h[..., None] * grad

    phi = np.zeros((len(x), cage.vertex_count))
    for k, (opp_a, opp_b) in enumerate(((B, C), (C, A), (A, B))):
        edge = opp_b - opp_a  # edge opposite corner k
        g = np.cross(nrm, edge) / two_area[:, None]  # (m, 3)
        bary = (
            np.einsum(
                "pmi,mi->pm",
                np.cross(edge[None], q - opp_a[None]),
                nrm,
            )
            / two_area[None]
        )
        contrib = (bary * omega + np.einsum("pmi,mi->pm", grad, g)) / (4 * np.pi)
        phi += contrib @ scatter[k]
    return phi, psi


def gc_face_stretch(rest_cage, deformed_cage, triangles) -> np.ndarray:
    """Per-face stretch factors of the Green formulation (1 at rest)."""
    r, d = np.asarray(rest_cage), np.asarray(deformed_cage)
    u = r[triangles[:, 1]] - r[triangles[:, 0]]
    v = r[triangles[:, 2]] - r[triangles[:, 0]]
    up = d[triangles[:, 1]] - d[triangles[:, 0]]
    vp = d[triangles[:, 2]] - d[triangles[:, 0]]
    num = (
        np.einsum("ij,ij->i", up, up) * np.einsum("ij,ij->i", v, v)
        - 2.0 * np.einsum("ij,ij->i", up, vp) * np.einsum("ij,ij->i", u, v)
        + np.einsum("ij,ij->i", vp, vp) * np.einsum("ij,ij->i", u, u)
    )
    area2 = np.linalg.norm(np.cross(u, v), axis=1)
    return np.sqrt(np.maximum(num, 0.0)) / (np.sqrt(2.0) * area2)


def apply_deformation(coords: CoordinateMatrix, deformed_cage) -> np.ndarray:
    """Evaluate template positions for a deformed cage.

    `deformed_cage` is a TriangleMesh or an (n, 3) vertex array with the
    binding cage's connectivity.
    """
    if isinstance(deformed_cage, TriangleMesh):
        if coords.cage_triangles is not None and not (
            deformed_cage.triangles.shape == coords.cage_triangles.shape
            and (deformed_cage.triangles == coords.cage_triangles).all()
        ):
            raise ConnectivityMismatch(
                "deformed cage connectivity differs from the binding cage"
            )
        verts = deformed_cage.vertices
    else:
        verts = np.asarray(deformed_cage, dtype=np.float64)
    if verts.shape != (coords.counts[1], 3):
        raise ConnectivityMismatch(
            f"expected {(coords.counts[1], 3)} cage vertices, got {verts.shape}"
        )
    if coords.is_mvc:
        return coords.vertex_weights @ verts
    if coords.rest_cage is None or coords.cage_triangles is None:
        raise PreconditionError(
            "Green binding needs the rest cage attached (attach_cage)"
        )
    tri = coords.cage_triangles
    n_def = np.cross(
        verts[tri[:, 1]] - verts[tri[:, 0]], verts[tri[:, 2]] - verts[tri[:, 0]]
    )
    norms = np.linalg.norm(n_def, axis=1, keepdims=True)
    n_def = np.where(norms > 0, n_def / norms, 0.0)
    stretch = gc_face_stretch(coords.rest_cage, verts, tri)
    return coords.vertex_weights @ verts + coords.face_weights @ (
        stretch[:, None] * n_def
    )


# --- coordinate file format -------------------------------------------------


def write_coords(coords: CoordinateMatrix, path) -> None:
    """Text format: method line, count line, then one matrix row per
    template vertex (GC face coordinates in the tail of the row)."""
    rows = [coords.method, f"{coords.counts[0]} {coords.counts[1]}"]
    w = np.where(
        np.abs(coords.vertex_weights) < _SPARSITY_EPS, 0.0, coords.vertex_weights
    )
    if coords.is_mvc:
        full = w
    else:
        f = np.where(
            np.abs(coords.face_weights) < _SPARSITY_EPS, 0.0, coords.face_weights
        )
        full = np.hstack([w, f])
    for row in full:
        rows.append(" ".join(f"{x:.17g}" for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def read_coords(path) -> CoordinateMatrix:
    """Parse a coordinate file; see `write_coords` for the layout.

    For Green coordinates the face count is inferred from the row tail;
    attach the cage afterwards to enable deformation.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("empty coordinate file")
    method = lines[0].strip()
    if method not in (MVC, GC):
        raise SchemaError(f"unknown coordinate method {method!r}")
    if len(lines) < 2:
        raise SchemaError("missing count line")
    parts = lines[1].split()
    if len(parts) != 2:
        raise SchemaError("count line must hold template and cage counts")
    try:
        nv, n = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise SchemaError(f"bad count line: {exc}") from exc
    data_lines = [ln for ln in lines[2:] if ln.strip()]
    if len(data_lines) != nv:
        raise CountMismatch(
            f"declared {nv} template rows, file has {len(data_lines)}"
        )
    try:
        matrix = [np.array([float(x) for x in ln.split()]) for ln in data_lines]
    except ValueError as exc:
        raise SchemaError(f"bad matrix value: {exc}") from exc
    widths = {len(r) for r in matrix} or {n}
    if len(widths) > 1:
        raise CountMismatch(f"inconsistent row lengths: {sorted(widths)}")
    width = widths.pop()
    if method == MVC:
        if width != n:
            raise CountMismatch(
                f"mean-value rows must have {n} values, got {width}"
            )
        vw = np.array(matrix).reshape(nv, n)
        return CoordinateMatrix(
            method=MVC,
            vertex_weights=vw,
            face_weights=np.zeros((nv, 0)),
            counts=(nv, n, 0),
        )
    if width <= n:
        raise CountMismatch(
            "Green rows must append face coordinates after the "
            f"{n} vertex values"
        )
    full = np.array(matrix).reshape(nv, width)
    return CoordinateMatrix(
        method=GC,
        vertex_weights=full[:, :n],
        face_weights=full[:, n:],
        counts=(nv, n, width - n),
    )


# --- handle manipulation -----------------------------------------------------


@dataclass(frozen=True)
class Translate:
    vector: tuple


@dataclass(frozen=True)
class Rotate:
    axis: tuple
    angle: float  # radians, about the selection barycenter


@dataclass(frozen=True)
class Stretch:
    direction: tuple
    amount: float


def manipulate_handles(cage_vertices, selection, op) -> np.ndarray:
    """Apply a handle operation to selected cage vertices.

    Translate moves the selection rigidly; Rotate spins it about the
    selection barycenter (needs >= 2 vertices); Stretch moves vertices
    away from (or toward, for negative amounts) the barycenter plane
    along a direction.
    """
    verts = np.array(cage_vertices, dtype=np.float64, copy=True)
    sel = np.asarray(sorted(set(int(i) for i in selection)), dtype=np.int64)
    if sel.size == 0:
        raise PreconditionError("empty handle selection")
    if sel.min() < 0 or sel.max() >= len(verts):
        raise PreconditionError("selection index out of range")

    if isinstance(op, Translate):
        verts[sel] += np.asarray(op.vector, dtype=np.float64)
    elif isinstance(op, Rotate):
        if sel.size < 2:
            raise RotateSingleVertex(
                "rotation about the barycenter needs more than 1 vertex"
            )
        axis = np.asarray(op.axis, dtype=np.float64)
        nrm = np.linalg.norm(axis)
        if nrm == 0:
            raise PreconditionError("rotation axis must be nonzero")
        axis = axis / nrm
        bary = verts[sel].mean(axis=0)
        rel = verts[sel] - bary
        cos, sin = np.cos(op.angle), np.sin(op.angle)
        verts[sel] = (
            bary
            + cos * rel
            + sin * np.cross(axis, rel)
            + (1 - cos) * np.outer(rel @ axis, axis)
        )
    elif isinstance(op, Stretch):
        direction = np.asarray(op.direction, dtype=np.float64)
        nrm = np.linalg.norm(direction)
        if nrm == 0:
            raise PreconditionError("stretch direction must be nonzero")
        direction = direction / nrm
        bary = verts[sel].mean(axis=0)
        side = np.sign((verts[sel] - bary) @ direction)
        verts[sel] += op.amount * side[:, None] * direction
    else:
        raise PreconditionError(f"unknown handle op {op!r}")
    return verts


def annotation_to_cage_vertices(
    coords: CoordinateMatrix, annotation, threshold: float = 0.05, mesh=None
) -> set:
    """Cage vertices that chiefly govern an annotated template part.

    Aggregates |w_ij| over the annotation's template vertices (pass the
    template mesh so region interiors count) and keeps cage vertices
    reaching `threshold` times the maximum aggregate. An over-tight
    threshold yields an empty selection with a warning.
    """
    verts = sorted(annotation.vertex_set(mesh))
    if not verts:
        warnings.warn("annotation selects no vertices; empty handle selection")
        return set()
    agg = np.abs(coords.vertex_weights[verts]).sum(axis=0)
    peak = agg.max()
    if peak <= 0:
        warnings.warn("annotation has no cage influence; empty selection")
        return set()
    selected = np.flatnonzero(agg >= threshold * peak)
    if selected.size == 0:
        warnings.warn("threshold too high; empty handle selection")
    return set(int(i) for i in selected)
