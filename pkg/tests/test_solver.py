import numpy as np
import pytest

from cageforge.annotation import Annotation, Attribute, create_annotation
from cageforge.binding import compute_gc, compute_mvc
from cageforge.errors import (
    GreenCoordsUnsupported,
    NeverSolved,
    PreconditionError,
    SingularSystem,
    UnresolvableMeasure,
)
from cageforge.mesh import TriangleMesh
from cageforge.semgraph import Relationship
from cageforge.solver import (
    SolverOptions,
    build_session,
    make_closeness,
    residuals,
    solve,
    vertex_indicator_rows,
    withdraw,
)

from conftest import cube, icosphere


@pytest.fixture
def bound_pair():
    template = icosphere(1)
    cage = cube(side=3.0, center=(0, 0, 0))
    coords = compute_mvc(template, cage)
    return template, cage, coords


def closeness_on_vertex(n, vertex, target, weight):
    return make_closeness(
        vertex_indicator_rows(n, [vertex]), [target], weight
    )


class TestBuildSession:
    def test_gc_binding_rejected(self):
        template = icosphere(1)
        cage = cube(side=3.0, center=(0, 0, 0))
        coords = compute_gc(template, cage)
        with pytest.raises(GreenCoordsUnsupported):
            build_session(cage, coords)

    def test_zero_arcs_builds(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        assert session.alive
        # every vertex got a weak rest anchor
        assert sum(c.kind == "rest_anchor" for c in session.constraints) == 8

    def test_unresolvable_measure(self, bound_pair):
        template, cage, coords = bound_pair
        ann1 = create_annotation(template, "point", [0], "a", ann_id=1)
        ann2 = create_annotation(template, "point", [1], "b", ann_id=2)
        attr = Attribute(id=0, name="d", kind="measure", tool="ruler",
                         points=(0, 1))
        ann1 = Annotation(**{**ann1.__dict__, "attributes": (attr,)})
        rel = Relationship(
            id=0, type="Proportion", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"measure1": 0, "measure2": 7, "minValue": 0.9,
                    "maxValue": 1.1},
        )
        with pytest.raises(UnresolvableMeasure):
            build_session(cage, coords, [rel], [ann1, ann2])

    def test_auto_anchor_off_fails(self, bound_pair):
        template, cage, coords = bound_pair
        with pytest.raises(SingularSystem):
            build_session(
                cage, coords,
                options=SolverOptions(auto_anchor=False),
            )


class TestSolve:
    def test_single_closeness_reaches_target(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        target = cage.vertices[3] + np.array([0.4, -0.2, 0.1])
        session.add_constraint(
            closeness_on_vertex(cage.vertex_count, 3, target, 2.0)
        )
        x, report = solve(session)
        assert np.linalg.norm(x[3] - target) < 1e-6
        others = [v for v in range(8) if v != 3]
        assert np.abs(x[others] - cage.vertices[others]).max() < 1e-6

    def test_weighted_average_two_closeness(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        t1 = cage.vertices[2] + np.array([1.0, 0.0, 0.0])
        t2 = cage.vertices[2] + np.array([0.0, 1.0, 0.0])
        w1, w2 = 2.0, 5.0
        session.add_constraint(closeness_on_vertex(8, 2, t1, w1))
        session.add_constraint(closeness_on_vertex(8, 2, t2, w2))
        x, _ = solve(session)
        expect = (w1 * t1 + w2 * t2) / (w1 + w2)
        assert np.linalg.norm(x[2] - expect) < 1e-6

    def test_all_satisfied_at_rest_is_fixed_point(self, bound_pair):
        template, cage, coords = bound_pair
        rel = Relationship(
            id=0, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"minValue": 0.0, "maxValue": 100.0},
        )
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [5], "b", ann_id=2)
        session = build_session(cage, coords, [rel], [a1, a2])
        x, report = solve(session)
        # rounding amplified by the weak-anchor conditioning (~kappa * eps)
        assert np.abs(x - cage.vertices).max() < 1e-8
        assert all(e["residual"] < 1e-8 for e in report.entries)

    def test_closeness_only_matches_lstsq_oracle(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        rng = np.random.default_rng(3)
        for v in (0, 3, 5):
            session.add_constraint(closeness_on_vertex(
                8, v, cage.vertices[v] + rng.normal(size=3), rng.uniform(0.5, 3)
            ))
        x, _ = solve(session)
        # oracle: stack all rows and solve dense least squares
        rows, rhs = [], []
        for c in session.constraints:
            w = np.sqrt(c.row_weight)
            rows.append(w * c.rows)
            rhs.append(w * np.asarray(c.params["targets"]))
        a = np.vstack(rows)
        b = np.vstack(rhs)
        expect, *_ = np.linalg.lstsq(a, b, rcond=None)
        assert np.abs(x - expect).max() < 1e-8

    def test_handle_pins_dominate(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        target = cage.vertices[1] + np.array([0.0, 0.0, 0.5])
        x, report = solve(session, {1: target})
        assert np.linalg.norm(x[1] - target) < 1e-5

    def test_energy_monotone_randomized(self, bound_pair):
        template, cage, coords = bound_pair
        rng = np.random.default_rng(42)
        for trial in range(20):
            anns, rels = [], []
            verts = rng.choice(template.vertex_count, size=6, replace=False)
            for k, v in enumerate(verts):
                anns.append(create_annotation(
                    template, "point", [int(v)], f"p{k}", ann_id=k
                ))
            kinds = rng.choice(["Distance", "Closeness"], size=3)
            for k, kind in enumerate(kinds):
                i, j = rng.choice(6, size=2, replace=False)
                if kind == "Distance":
                    lo = float(rng.uniform(0.1, 0.5))
                    rels.append(Relationship(
                        id=k, type="Distance", is_directed=False,
                        annotations=(int(i), int(j)), is_constraint=True,
                        weight=float(rng.uniform(0.5, 4.0)),
                        params={"minValue": lo, "maxValue": lo + 0.2},
                    ))
                else:
                    rels.append(Relationship(
                        id=k, type="Closeness", is_directed=False,
                        annotations=(int(i), int(j)), is_constraint=True,
                        weight=float(rng.uniform(0.5, 4.0)),
                        params={"target": rng.normal(size=3).tolist()},
                    ))
            session = build_session(cage, coords, rels, anns)
            pin = {0: cage.vertices[0] + rng.normal(scale=0.2, size=3)}
            _, report = solve(session, pin)
            trace = np.array(report.energy_trace)
            slack = 1e-12 * max(trace[0], 1.0)
            assert (np.diff(trace) <= slack).all(), f"trial {trial}"

    def test_weight_scaling_invariance(self, bound_pair):
        template, cage, coords = bound_pair
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [7], "b", ann_id=2)

        def run(scale):
            rel = Relationship(
                id=0, type="Distance", is_directed=False, annotations=(1, 2),
                is_constraint=True, weight=2.0 * scale,
                params={"minValue": 0.1, "maxValue": 0.3},
            )
            session = build_session(cage, coords, [rel], [a1, a2])
            x, _ = solve(session, {2: cage.vertices[2] + [0.3, 0, 0]})
            return x

        x1 = run(1.0)
        x2 = run(37.0)
        assert np.abs(x1 - x2).max() < 1e-7

    def test_nonconvergence_reported_not_raised(self, bound_pair):
        template, cage, coords = bound_pair
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [7], "b", ann_id=2)
        rel = Relationship(
            id=0, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"minValue": 0.05, "maxValue": 0.06},
        )
        session = build_session(
            cage, coords, [rel], [a1, a2],
            options=SolverOptions(max_iterations=2, tolerance=1e-16),
        )
        x, report = solve(session)
        assert not report.converged
        assert report.iterations == 2


class TestResiduals:
    def conflicting_session(self, bound_pair, w1=1.0, w2=1.0):
        template, cage, coords = bound_pair
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [7], "b", ann_id=2)
        d0 = float(np.linalg.norm(
            coords.vertex_weights[0] @ cage.vertices
            - coords.vertex_weights[7] @ cage.vertices
        ))
        r1 = Relationship(
            id=0, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=w1,
            params={"minValue": 0.5 * d0, "maxValue": 0.6 * d0},
        )
        r2 = Relationship(
            id=1, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=w2,
            params={"minValue": 1.4 * d0, "maxValue": 1.5 * d0},
        )
        return build_session(cage, coords, [r1, r2], [a1, a2])

    def test_symmetric_conflict_equal_residuals(self, bound_pair):
        session = self.conflicting_session(bound_pair)
        _, report = solve(session)
        res = [e["residual"] for e in report.entries if e["kind"] == "distance_range"]
        assert len(res) == 2
        assert res[0] > 1e-6 and res[1] > 1e-6
        assert res[0] == pytest.approx(res[1], abs=1e-9)

    def test_weight_shifts_tradeoff(self, bound_pair):
        base = self.conflicting_session(bound_pair)
        _, r_eq = solve(base)
        heavy = self.conflicting_session(bound_pair, w1=100.0, w2=1.0)
        _, r_heavy = solve(heavy)

        def by_id(report, rid):
            return next(e["residual"] for e in report.entries if e["id"] == rid)

        assert by_id(r_heavy, 0) < by_id(r_eq, 0)
        assert by_id(r_heavy, 1) > by_id(r_eq, 1)

    def test_total_energy_identity(self, bound_pair):
        session = self.conflicting_session(bound_pair)
        _, report = solve(session)
        total = sum(e["weight"] * e["residual"] ** 2 for e in report.entries)
        assert report.total_energy == pytest.approx(total, rel=1e-9)

    def test_distance_residual_matches_definition(self, bound_pair):
        template, cage, coords = bound_pair
        session = self.conflicting_session(bound_pair)
        x, report = solve(session)
        p0 = coords.vertex_weights[0] @ x
        p7 = coords.vertex_weights[7] @ x
        d = float(np.linalg.norm(p0 - p7))
        for e in report.entries:
            if e["id"] == 0:
                lo, hi = session.constraints[0].params["range"]
                assert e["residual"] == pytest.approx(
                    max(0.0, lo - d, d - hi), abs=1e-7
                )

    def test_never_solved(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        with pytest.raises(NeverSolved):
            residuals(session)


class TestWithdraw:
    def test_withdraw_twice_noop(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        withdraw(session)
        withdraw(session)
        assert not session.alive

    def test_solve_after_withdraw_rejected(self, bound_pair):
        template, cage, coords = bound_pair
        session = build_session(cage, coords)
        withdraw(session)
        with pytest.raises(PreconditionError):
            solve(session)

    def test_rebuild_replays_identically(self, bound_pair):
        template, cage, coords = bound_pair

        def run():
            session = build_session(cage, coords)
            session.add_constraint(
                closeness_on_vertex(8, 4, [0.3, 0.4, 0.5], 2.0)
            )
            x, _ = solve(session, {0: cage.vertices[0] + [0.1, 0.0, 0.0]})
            withdraw(session)
            return x

        x1, x2 = run(), run()
        np.testing.assert_array_equal(x1, x2)


class TestMeasurePreservation:
    def test_distance_pin_survives_handle_drag(self):
        # a bar template bound to a box cage; a fixed-length constraint on
        # a template measure holds while a cage corner is dragged
        from conftest import box_mesh

        template = box_mesh(size=(2.0, 0.6, 0.6), n=(6, 2, 2))
        cage = cube(side=3.2, center=(0, 0, 0))
        coords = compute_mvc(template, cage)

        vij = (0, template.vertex_count - 1)
        d0 = float(np.linalg.norm(
            template.vertices[vij[0]] - template.vertices[vij[1]]
        ))
        a1 = create_annotation(template, "point", [vij[0]], "a", ann_id=1)
        a2 = create_annotation(template, "point", [vij[1]], "b", ann_id=2)
        rel = Relationship(
            id=0, type="Distance", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"minValue": d0, "maxValue": d0},
        )
        drag = {0: cage.vertices[0] + np.array([-0.8, -0.8, -0.8])}

        # without the constraint the drag distorts the measure by > 10%
        free = build_session(cage, coords)
        xf, _ = solve(free, drag)
        pa = coords.vertex_weights[vij[0]] @ xf
        pb = coords.vertex_weights[vij[1]] @ xf
        unconstrained = float(np.linalg.norm(pa - pb))
        assert abs(unconstrained - d0) > 0.1 * d0

        session = build_session(cage, coords, [rel], [a1, a2])
        x, report = solve(session, drag)
        pa = coords.vertex_weights[vij[0]] @ x
        pb = coords.vertex_weights[vij[1]] @ x
        constrained = float(np.linalg.norm(pa - pb))
        assert abs(constrained - d0) <= 1e-4 * d0


class TestEdgeStrainArc:
    def test_satisfied_edge_strain_zero_residual(self, bound_pair):
        template, cage, coords = bound_pair
        a1 = create_annotation(template, "point", [0], "a", ann_id=1)
        a2 = create_annotation(template, "point", [7], "b", ann_id=2)
        rel = Relationship(
            id=0, type="EdgeStrain", is_directed=False, annotations=(1, 2),
            is_constraint=True, weight=1.0,
            params={"minValue": 0.5, "maxValue": 2.0},
        )
        session = build_session(cage, coords, [rel], [a1, a2])
        _, report = solve(session)
        entry = next(e for e in report.entries if e["kind"] == "edge_strain")
        assert entry["residual"] < 1e-8
        assert entry["satisfied"]
