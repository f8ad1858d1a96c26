"""Projective local-global solver over cage vertices.

Semantic constraint arcs compile to constraint instances whose anchors
are fixed linear functionals of the cage (GBC rows or vertex
indicators), so constraints survive cage-driven deformation. Each solve
alternates per-constraint feasibility projections with a prefactored
weighted least-squares step; per-constraint residuals report how well a
deformation honors the semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .binding import CoordinateMatrix
from .errors import (
    GreenCoordsUnsupported,
    NeverSolved,
    PreconditionError,
    SingularSystem,
    UnresolvableMeasure,
)
from .mesh import TriangleMesh

KIND_TOLERANCE_FACTOR = 1e-6  # satisfied when residual < factor * diagonal


@dataclass
class SolverOptions:
    max_iterations: int = 500
    tolerance: float = 1e-7  # of the cage bounding-box diagonal
    pin_weight_factor: float = 1e4  # of the largest constraint weight
    rest_anchor_factor: float = 1e-7  # of the largest constraint weight
    auto_anchor: bool = True


@dataclass
class ConstraintInstance:
    """One compiled constraint: anchor rows plus projection parameters.

    `row_weight` is the least-squares weight per anchor row, chosen so the
    constraint's energy equals weight * residual^2 with `residual` the
    geometric violation (a length gap for range constraints, a point gap
    for closeness).
    """

    source_id: int | None
    kind: str
    rows: np.ndarray  # (k, n_cage)
    weight: float
    row_weight: float
    params: dict = field(default_factory=dict)

    def project(self, anchors: np.ndarray):
        """Feasibility projection: targets for the anchors plus the
        scalar violation of the current configuration."""
        return _PROJECTIONS[self.kind](anchors, self.params)


def _project_closeness(p, params):
    t = np.asarray(params["targets"], dtype=np.float64).reshape(p.shape)
    residual = float(np.linalg.norm(p - t))
    return t, residual


def _pair_to_length(p0, p1, length):
    d = float(np.linalg.norm(p0 - p1))
    if d < 1e-300:
        u = np.array([1.0, 0.0, 0.0])
        d = 0.0
    else:
        u = (p0 - p1) / d
    mid = (p0 + p1) / 2
    half = 0.5 * length * u
    return np.vstack([mid + half, mid - half]), d


def _project_distance_range(p, params):
    lo, hi = params["range"]
    d = float(np.linalg.norm(p[0] - p[1]))
    target_len = min(max(d, lo), hi)
    residual = abs(d - target_len)
    if params.get("directed"):
        if d < 1e-300:
            u = np.array([1.0, 0.0, 0.0])
        else:
            u = (p[0] - p[1]) / d
        return np.vstack([p[0], p[0] - target_len * u]), residual
    targets, _ = _pair_to_length(p[0], p[1], target_len)
    return targets, residual


def _cone_project(d1, d2, lo, hi):
    """Nearest (l1, l2) with l1/l2 in [lo, hi] in the plane metric."""
    ratio = d1 / max(d2, 1e-300)
    if lo <= ratio <= hi:
        return d1, d2
    bound = hi if ratio > hi else lo
    t = (bound * d1 + d2) / (bound * bound + 1.0)
    t = max(t, 0.0)
    return bound * t, t


def _project_proportion(p, params):
    lo, hi = params["range"]
    d1 = float(np.linalg.norm(p[0] - p[1]))
    d2 = float(np.linalg.norm(p[2] - p[3]))
    if params.get("directed"):
        l1 = d1
        l2 = min(max(d2, d1 / hi), d1 / lo) if d1 > 0 else d2
        t_head, _ = _pair_to_length(p[2], p[3], l2)
        targets = np.vstack([p[0], p[1], t_head])
        residual = abs(d2 - l2)
    else:
        l1, l2 = _cone_project(d1, d2, lo, hi)
        t1, _ = _pair_to_length(p[0], p[1], l1)
        t2, _ = _pair_to_length(p[2], p[3], l2)
        targets = np.vstack([t1, t2])
        residual = float(np.hypot(d1 - l1, d2 - l2))
    return targets, residual


def _project_same_measure(p, params):
    d1 = float(np.linalg.norm(p[0] - p[1]))
    d2 = float(np.linalg.norm(p[2] - p[3]))
    if params.get("directed"):
        l1, l2 = d1, d1
        residual = abs(d2 - d1)
    else:
        l1 = l2 = (d1 + d2) / 2
        residual = float(np.hypot(d1 - l1, d2 - l2))
    t1, _ = _pair_to_length(p[0], p[1], l1)
    t2, _ = _pair_to_length(p[2], p[3], l2)
    return np.vstack([t1, t2]), residual


_PROJECTIONS = {
    "closeness": _project_closeness,
    "rest_anchor": _project_closeness,
    "distance_range": _project_distance_range,
    "edge_strain": _project_distance_range,
    "proportion": _project_proportion,
    "same_measure": _project_same_measure,
}


@dataclass
class ResidualReport:
    entries: list  # dicts: id, kind, weight, residual, satisfied
    total_energy: float
    iterations: int
    converged: bool
    energy_trace: list

    def to_json(self) -> dict:
        return {
            "constraints": self.entries,
            "totalEnergy": self.total_energy,
            "iterations": self.iterations,
            "converged": self.converged,
        }


class SolverSession:
    """Constrained-deformation state over one cage binding."""

    def __init__(self, cage: TriangleMesh, coords: CoordinateMatrix,
                 constraints, options: SolverOptions):
        self.cage = cage
        self.coords = coords
        self.constraints: list[ConstraintInstance] = list(constraints)
        self.options = options
        self.rest = np.array(cage.vertices, dtype=np.float64)
        self.current = self.rest.copy()
        self.alive = True
        self.last_report: ResidualReport | None = None
        self._base_matrix = None
        self._factor_cache = {}
        self._fit_constraints: list[ConstraintInstance] = []
        self._refresh_base()

    # -- assembly -----------------------------------------------------------

    def _refresh_base(self):
        n = self.cage.vertex_count
        m = np.zeros((n, n))
        for c in self.constraints + self._fit_constraints:
            m += c.row_weight * (c.rows.T @ c.rows)
        self._base_matrix = m
        self._factor_cache = {}
        try:
            self._factor_for(())
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(
                "global matrix is not positive definite; add anchors or "
                "enable auto_anchor"
            ) from exc

    def _factor_for(self, pin_key):
        if pin_key not in self._factor_cache:
            m = self._base_matrix.copy()
            for vertex, weight in pin_key:
                m[vertex, vertex] += weight
            self._factor_cache[pin_key] = cho_factor(m)
        return self._factor_cache[pin_key]

    def add_constraint(self, instance: ConstraintInstance):
        if not self.alive:
            raise PreconditionError("session was withdrawn")
        self.constraints.append(instance)
        self._refresh_base()

    def set_fit_constraints(self, instances):
        """Replace the transient fit-constraint batch (non-rigid fitting)."""
        if not self.alive:
            raise PreconditionError("session was withdrawn")
        self._fit_constraints = list(instances)
        self._refresh_base()

    def reset(self):
        self.current = self.rest.copy()
        self.last_report = None


def _representative_vertex(annotation) -> int:
    if annotation.selector == "point":
        return int(annotation.points[0])
    if annotation.selector == "line":
        return int(annotation.polylines[0][0])
    return int(annotation.boundaries[0][0])


def _measure_endpoints(annotation, measure_index: int):
    measures = [a for a in annotation.attributes if a.kind == "measure"]
    if measure_index >= len(measures):
        raise UnresolvableMeasure(
            f"annotation {annotation.id} has {len(measures)} measures, "
            f"constraint references index {measure_index}"
        )
    pts = measures[measure_index].points
    return int(pts[0]), int(pts[-1])


def _gbc_row(coords: CoordinateMatrix, vertex: int) -> np.ndarray:
    return coords.vertex_weights[vertex]


def build_session(
    cage: TriangleMesh,
    coords: CoordinateMatrix,
    relationships=(),
    annotations=(),
    options: SolverOptions | None = None,
) -> SolverSession:
    """Compile constraint arcs into a solver session.

    Requires a mean-value binding (Green coordinates are nonlinear in the
    cage and unsupported for constrained deformation). Measure anchors
    become GBC rows of the measure endpoints. Cage vertices not reached
    by any position anchor receive weak rest anchors so the prefactored
    system is positive definite; disable auto_anchor to make under-
    anchored sessions fail instead.
    """
    if not coords.is_mvc:
        raise GreenCoordsUnsupported(
            "constrained deformation requires mean value coordinates"
        )
    options = options or SolverOptions()
    by_id = {a.id: a for a in annotations}
    n = cage.vertex_count
    rest = np.asarray(cage.vertices, dtype=np.float64)

    def row_of(annotation):
        return _gbc_row(coords, _representative_vertex(annotation))

    compiled: list[ConstraintInstance] = []
    base_weight = 1.0
    arcs = [r for r in relationships if getattr(r, "is_constraint", False)]
    if arcs:
        base_weight = max(r.weight for r in arcs)

    for rel in arcs:
        anns = [by_id[i] for i in rel.annotations if i in by_id]
        if len(anns) != len(rel.annotations):
            missing = set(rel.annotations) - set(by_id)
            raise PreconditionError(
                f"relationship {rel.id} references unknown annotations "
                f"{sorted(missing)}"
            )
        params = rel.params or {}
        if rel.type == "Closeness":
            rows = np.vstack([row_of(a) for a in anns])
            targets = params.get("target")
            if targets is None:
                t = rows @ rest
            else:
                t = np.tile(np.asarray(targets, dtype=np.float64), (len(anns), 1))
            compiled.append(ConstraintInstance(
                source_id=rel.id, kind="closeness", rows=rows,
                weight=rel.weight, row_weight=rel.weight,
                params={"targets": t},
            ))
        elif rel.type == "Distance":
            rows = np.vstack([row_of(anns[0]), row_of(anns[1])])
            compiled.append(ConstraintInstance(
                source_id=rel.id, kind="distance_range", rows=rows,
                weight=rel.weight,
                row_weight=rel.weight if rel.is_directed else 2 * rel.weight,
                params={"range": (params["minValue"], params["maxValue"]),
                        "directed": rel.is_directed},
            ))
        elif rel.type == "EdgeStrain":
            rows = np.vstack([row_of(anns[0]), row_of(anns[1])])
            rest_len = float(np.linalg.norm(rows[0] @ rest - rows[1] @ rest))
            compiled.append(ConstraintInstance(
                source_id=rel.id, kind="edge_strain", rows=rows,
                weight=rel.weight,
                row_weight=rel.weight if rel.is_directed else 2 * rel.weight,
                params={"range": (params["minValue"] * rest_len,
                                  params["maxValue"] * rest_len),
                        "directed": rel.is_directed},
            ))
        elif rel.type in ("Proportion", "SameMeasure"):
            a1, a2 = _measure_endpoints(anns[0], params["measure1"])
            b1, b2 = _measure_endpoints(anns[1], params["measure2"])
            rows = np.vstack([
                _gbc_row(coords, a1), _gbc_row(coords, a2),
                _gbc_row(coords, b1), _gbc_row(coords, b2),
            ])
            kind = "proportion" if rel.type == "Proportion" else "same_measure"
            extra = {"directed": rel.is_directed}
            if kind == "proportion":
                extra["range"] = (params["minValue"], params["maxValue"])
            compiled.append(ConstraintInstance(
                source_id=rel.id, kind=kind, rows=rows,
                weight=rel.weight, row_weight=2 * rel.weight, params=extra,
            ))
        # non-constraint types (containment, adjacency, ...) compile to nothing

    if options.auto_anchor:
        # weak rest anchors keep the normal matrix positive definite while
        # perturbing the energy by rest_anchor_factor relative at most
        rest_weight = options.rest_anchor_factor * base_weight
        for v in range(n):
            row = np.zeros((1, n))
            row[0, v] = 1.0
            compiled.append(ConstraintInstance(
                source_id=None, kind="rest_anchor", rows=row,
                weight=rest_weight, row_weight=rest_weight,
                params={"targets": rest[v : v + 1].copy()},
            ))

    # without auto anchors, SolverSession's factorization raises
    # SingularSystem when the constraints do not span the cage
    session = SolverSession(cage, coords, compiled, options)
    session.base_weight = base_weight
    return session


def solve(session: SolverSession, handle_targets=None):
    """Run local-global iterations against the current handle targets.

    Returns (deformed cage vertices, ResidualReport). Non-convergence at
    the iteration limit is reported, not raised.
    """
    if not session.alive:
        raise PreconditionError("session was withdrawn")
    handle_targets = dict(handle_targets or {})
    n = session.cage.vertex_count
    opts = session.options
    base = getattr(session, "base_weight", 1.0)
    pin_weight = opts.pin_weight_factor * max(
        base, max((c.weight for c in session.constraints), default=1.0)
    )

    pins = []
    for vertex, target in sorted(handle_targets.items()):
        if not 0 <= int(vertex) < n:
            raise PreconditionError(f"handle vertex {vertex} out of range")
        pins.append((int(vertex), np.asarray(target, dtype=np.float64)))
    pin_key = tuple((v, pin_weight) for v, _ in pins)
    factor = session._factor_for(pin_key)

    active = session.constraints + session._fit_constraints
    rows_cache = [c.rows for c in active]
    x = session.current.copy()
    tol = opts.tolerance * max(session.cage.diagonal, 1e-30)
    energy_trace = []
    converged = False
    iterations = 0

    for iterations in range(1, opts.max_iterations + 1):
        # local step: project every constraint's anchors onto feasibility
        projected = []
        rhs = np.zeros((n, 3))
        for c, rows in zip(active, rows_cache):
            targets, _ = c.project(rows @ x)
            projected.append(targets)
            rhs += c.row_weight * (rows.T @ targets)
        for v, target in pins:
            rhs[v] += pin_weight * target
        # global step: weighted least squares toward all projections
        x_new = cho_solve(factor, rhs)

        energy = 0.0
        for c, rows, targets in zip(active, rows_cache, projected):
            gap = rows @ x_new - targets
            energy += c.row_weight * float((gap * gap).sum())
        for v, target in pins:
            energy += pin_weight * float(((x_new[v] - target) ** 2).sum())
        energy_trace.append(energy)

        shift = float(np.abs(x_new - x).max())
        x = x_new
        if shift < tol:
            converged = True
            break

    session.current = x
    report = _build_report(session, active, pins, pin_weight, x,
                           iterations, converged, energy_trace)
    session.last_report = report
    return x, report


def _build_report(session, active, pins, pin_weight, x,
                  iterations, converged, energy_trace) -> ResidualReport:
    tol = KIND_TOLERANCE_FACTOR * max(session.cage.diagonal, 1e-30)
    entries = []
    total = 0.0
    for c in active:
        _, residual = c.project(c.rows @ x)
        entries.append({
            "id": c.source_id,
            "kind": c.kind,
            "weight": c.weight,
            "residual": residual,
            "satisfied": bool(residual < tol),
        })
        total += c.weight * residual * residual
    for v, target in pins:
        residual = float(np.linalg.norm(x[v] - target))
        entries.append({
            "id": None,
            "kind": "handle_pin",
            "weight": pin_weight,
            "residual": residual,
            "satisfied": bool(residual < tol),
        })
        total += pin_weight * residual * residual
    entries.sort(key=lambda e: (e["id"] is None, e["id"] or 0, e["kind"]))
    return ResidualReport(
        entries=entries,
        total_energy=total,
        iterations=iterations,
        converged=converged,
        energy_trace=energy_trace,
    )


def residuals(session: SolverSession) -> ResidualReport:
    """Last solve's per-constraint report (stable order by constraint id)."""
    if session.last_report is None:
        raise NeverSolved("solve the session at least once")
    return session.last_report


def withdraw(session: SolverSession) -> None:
    """Release the session; repeated withdrawal is a no-op."""
    session.alive = False
    session._factor_cache = {}
    session._base_matrix = None


def make_closeness(rows, targets, weight, source_id=None) -> ConstraintInstance:
    """Closeness instance over arbitrary anchor rows (used for explicit
    cage pins and fitting correspondences)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    return ConstraintInstance(
        source_id=source_id, kind="closeness", rows=rows,
        weight=weight, row_weight=weight, params={"targets": targets},
    )


def vertex_indicator_rows(n: int, vertices) -> np.ndarray:
    rows = np.zeros((len(vertices), n))
    for k, v in enumerate(vertices):
        rows[k, int(v)] = 1.0
    return rows
