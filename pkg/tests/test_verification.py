"""Maximum-principle bounds, barriers, interpolation fits and ratios."""

import numpy as np
import pytest

from degenpde.analytic import AnalyticFunction, bump, space_symbols
from degenpde.fields import constant_field, heston, homogeneous_drift
from degenpde.grid import Grid, GridFunction
from degenpde.solver import (
    CauchyProblem,
    manufactured_problem,
    operator_apply,
    solve_cauchy,
)
from degenpde.verification import (
    CHECK_CSV_COLUMNS,
    Barrier,
    absolute_bound_suite,
    boundary_vanishing_check,
    check_barrier,
    check_quadratic_supersolution,
    check_sup_bound,
    check_weighted_bound,
    checks_to_csv,
    comparison_check,
    data_sups,
    first_layer_weighted_hessian,
    fit_interpolation_constants,
    growth_constant_on_grid,
    interpolation_check,
    maximum_principle_suite,
    nonpositivity_check,
    quadratic_supersolution,
    reduction_round_trip,
    schauder_ratio,
    weighted_bound_suite,
    weighted_supersolution,
)


def solve_pair(seed=0):
    """Two certified solves with ordered data on a shared grid."""
    import sympy as sp
    from degenpde.analytic import time_symbol
    field = homogeneous_drift(1.0)
    grid = Grid.build(2, 3.0, 3.0, 11, 11, 0.5, 8)
    syms = space_symbols(2)
    prof = sp.exp(-(syms[0] ** 2) - (syms[1] - sp.Rational(1, 2)) ** 2)
    g1 = AnalyticFunction(2, -1 - prof)
    f1 = AnalyticFunction(2, -sp.exp(-time_symbol()) * prof - sp.Float(0.2))
    p1 = CauchyProblem(field, f1, g1, name="lower")
    g2 = AnalyticFunction(2, g1.expr + prof / 2 + sp.Rational(1, 10))
    f2 = AnalyticFunction(2, f1.expr + sp.Rational(1, 10))
    p2 = CauchyProblem(field, f2, g2, name="upper")
    u1, _ = solve_cauchy(p1, grid)
    u2, _ = solve_cauchy(p2, grid)
    return field, grid, p1, u1, p2, u2


class TestSupersolutions:
    @pytest.mark.parametrize("field", [
        homogeneous_drift(1.0), heston(2.0, 0.25, 1.0, 0.3)])
    def test_quadratic_supersolution_holds(self, field):
        res = check_quadratic_supersolution(field, seed=1)
        assert res.passed, res.line()
        assert res.lhs >= 0.0

    def test_quadratic_supersolution_needs_large_rate(self):
        res = check_quadratic_supersolution(homogeneous_drift(1.0),
                                            lam=-10.0, seed=1)
        assert not res.passed

    def test_quadratic_supersolution_closed_form(self):
        h = quadratic_supersolution(2)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 2))
        assert np.allclose(h.value(np.zeros(40), x),
                           1 + np.sum(x ** 2, axis=1), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("q", [1.0, 2.0])
    def test_weighted_supersolution_dominates_itself(self, q):
        # (L v2) >= v2 pointwise once the rate is 1 + q(q+4)K with K the
        # growth constant measured on the sampling box
        field = heston(2.0, 0.25, 1.0, 0.0)
        grid = Grid.build(2, 3.0, 3.0, 14, 14, 0.5, 12)
        K = growth_constant_on_grid(field, grid)
        v2, lam = weighted_supersolution(K, q, 1.0)
        assert abs(lam - (1.0 + q * (q + 4.0) * K)) <= 1e-12
        lv2 = operator_apply(field, v2)
        rng = np.random.default_rng(3)
        t = rng.uniform(0.0, 0.5, 2000)
        x = rng.uniform(-3.0, 3.0, (2000, 2))
        x[:, 1] = rng.uniform(0.0, 3.0, 2000)
        gap = lv2.value(t, x) - v2.value(t, x)
        assert float(np.min(gap)) >= -1e-10


class TestSupBounds:
    def test_equality_case_is_sharp(self):
        field = homogeneous_drift(1.0)
        problem = manufactured_problem(field, "constant")
        grid = Grid.build(2, 3.0, 3.0, 11, 11, 0.5, 8)
        u, _ = solve_cauchy(problem, grid)
        res = check_sup_bound(u, problem, K=0.0)
        assert res.passed
        assert abs(res.lhs / res.rhs - 1.0) <= 1e-8

    def test_audited_region_excludes_margin(self):
        field = homogeneous_drift(1.0)
        problem = manufactured_problem(field, "constant")
        grid = Grid.build(2, 3.0, 3.0, 11, 11, 0.5, 8)
        u, _ = solve_cauchy(problem, grid)
        outside = np.unravel_index(
            int(np.argmax(~grid.audited_mask().ravel())), grid.shape)
        spiked = u.copy()
        spiked.values[(1,) + outside] = 50.0
        assert check_sup_bound(spiked, problem, K=0.0).passed
        inside = np.unravel_index(
            int(np.argmax(grid.audited_mask().ravel())), grid.shape)
        spiked.values[(1,) + inside] = 50.0
        assert not check_sup_bound(spiked, problem, K=0.0).passed

    def test_data_sups(self):
        field = homogeneous_drift(1.0)
        problem = manufactured_problem(field, "affine_height")
        grid = Grid.build(2, 1.0, 2.0, 7, 7, 0.5, 4)
        f_sup, g_sup = data_sups(problem, grid)
        assert abs(g_sup - 3.0) <= 1e-12  # 1 + height at the top
        nodes = grid.nodes()
        by_hand = max(float(np.max(np.abs(problem.f_values(t, nodes))))
                      for t in grid.times)
        assert f_sup == by_hand

    def test_weighted_bound_passes_and_scales(self):
        field = homogeneous_drift(1.0)
        problem = manufactured_problem(field, "inner_bump", x_extent=3.0,
                                       height=3.0)
        grid = Grid.build(2, 3.0, 3.0, 11, 11, 0.5, 8)
        u, _ = solve_cauchy(problem, grid)
        K = growth_constant_on_grid(field, grid)
        for q in (1.0, 2.0):
            res = check_weighted_bound(u, problem, K, q)
            assert res.passed, res.line()
            assert res.rhs >= res.lhs > 0


class TestComparison:
    def test_ordered_solutions_compare(self):
        field, grid, p1, u1, p2, u2 = solve_pair()
        res = comparison_check(u1, u2, field)
        assert res.passed and "not-applicable" not in res.check

    def test_reversed_premises_not_applicable(self):
        field, grid, p1, u1, p2, u2 = solve_pair()
        res = comparison_check(u2, u1, field)
        assert res.passed and "not-applicable" in res.check

    def test_conclusion_branch_can_fail(self):
        # premises hold; an impossible conclusion tolerance must flip the
        # verdict rather than fall back to not-applicable
        field, grid, p1, u1, p2, u2 = solve_pair()
        res = comparison_check(u1, u2, field, conclusion_tol=-1e6)
        assert not res.passed and "not-applicable" not in res.check

    def test_grid_mismatch_rejected(self):
        field, grid, p1, u1, p2, u2 = solve_pair()
        other = Grid.build(2, 3.0, 3.0, 9, 9, 0.5, 8)
        w = GridFunction(other, np.zeros((8, 9, 9)))
        with pytest.raises(ValueError):
            comparison_check(u1, w, field)

    def test_nonpositivity_verdicts(self):
        field, grid, p1, u1, p2, u2 = solve_pair()
        res = nonpositivity_check(u1, p1)
        assert res.passed and "not-applicable" not in res.check
        assert float(np.max(u1.values)) <= 1e-8
        pos = CauchyProblem(field, p1.f, AnalyticFunction(2, -p1.g.expr),
                            name="positive-data")
        res2 = nonpositivity_check(u1, pos)
        assert res2.passed and "not-applicable" in res2.check


class TestSuites:
    def test_maximum_principle_suite(self):
        results = maximum_principle_suite(n_problems=6, seed=10)
        assert len(results) == 12
        assert all(r.passed for r in results)
        assert not any("not-applicable" in r.check for r in results)

    def test_absolute_bound_suite(self):
        results = absolute_bound_suite(n_problems=4, seed=11)
        assert len(results) == 8
        assert all(r.passed for r in results)
        kinds = {r.check.split("[")[0].split("(")[0] for r in results}
        assert kinds == {"absolute-bound", "sup-bound"}

    def test_weighted_bound_suite(self):
        results = weighted_bound_suite(n_problems=4, seed=12)
        assert len(results) == 8
        assert all(r.passed for r in results)
        assert any("heston" in r.check for r in results)


class TestBarrier:
    def test_piece_identities(self):
        # time and space derivatives of each traveling piece close over
        # powers of the piece itself
        bar = Barrier(2, 0, [2.0, 0.0])
        rng = np.random.default_rng(4)
        t = rng.uniform(0.0, bar.window, 500)
        x = rng.uniform(-0.2, 0.2, (500, 2))
        x[:, 1] = rng.uniform(0.0, 3.0, 500)
        keep = bar.in_window(t, x)
        t, x = t[keep], x[keep]
        b = bar.speed
        for piece, sign in ((bar.plus, -1.0), (bar.minus, 1.0)):
            vals = piece.value(t, x)
            assert np.allclose(piece.dt(t, x), 2 * b * vals ** 1.5,
                               rtol=1e-10, atol=1e-10)
            assert np.allclose(piece.dx(0, t, x), 2 * sign * vals ** 1.5,
                               rtol=1e-10, atol=1e-10)
            assert np.allclose(piece.dxx(0, 0, t, x), 6 * vals ** 2,
                               rtol=1e-10, atol=1e-10)
            assert np.allclose(piece.dx(1, t, x), 0.0, rtol=0, atol=1e-12)

    def test_model_operator_closed_form(self):
        drift = -2.0
        bar = Barrier(2, 0, [drift, 0.0])
        rng = np.random.default_rng(5)
        t = rng.uniform(0.0, bar.window, 400)
        x = rng.uniform(-0.2, 0.2, (400, 2))
        x[:, 1] = rng.uniform(0.0, 3.0, 400)
        keep = bar.in_window(t, x)
        t, x = t[keep], x[keep]
        b = bar.speed
        p = bar.plus.value(t, x)
        m = bar.minus.value(t, x)
        want = (2 * (b + drift) * p ** 1.5 + 2 * (b - drift) * m ** 1.5
                - 6 * x[:, 1] * (p ** 2 + m ** 2))
        got = bar.model_operator(t, x)
        assert np.allclose(got, want, rtol=1e-10, atol=1e-10)

    def test_window_geometry(self):
        bar = Barrier(2, 0, [2.0, 0.0], gamma=0.5)
        assert bar.speed == 3.0
        assert abs(bar.window - 0.9 * 0.5 / 3.0) <= 1e-15
        inside = bar.in_window(np.array([0.0]), np.array([[0.0, 1.0]]))
        assert bool(inside[0])
        late = bar.in_window(np.array([bar.window * 1.01]),
                             np.array([[0.0, 1.0]]))
        assert not bool(late[0])

    @pytest.mark.parametrize("drift", [-2.0, 0.0, 2.0])
    def test_residual_strictly_positive(self, drift):
        res = check_barrier(drift, n_points=1500, seed=6)
        assert res.passed, res.line()
        assert res.lhs > 0.0


class TestInterpolation:
    def test_fit_oracle_single_case(self):
        lhs = {k: 1.0 for k in ("c-alpha", "gradient-sup",
                                "weighted-gradient", "weighted-hessian")}
        fits = fit_interpolation_constants([(lhs, 1.0, 1.0)], (0.5,))
        for fit in fits.values():
            # need(m) = (1 - 0.5) * 0.5^m strictly decreases, best at m = 6
            assert fit.exponent == 6.0
            assert abs(fit.constant - 0.5 * 0.5 ** 6.0) <= 1e-15

    def test_fit_prefers_smallest_exponent(self):
        lhs = {k: 0.2 for k in ("c-alpha", "gradient-sup",
                                "weighted-gradient", "weighted-hessian")}
        fits = fit_interpolation_constants([(lhs, 1.0, 1.0)], (0.5, 0.25))
        for fit in fits.values():
            assert fit.constant == 0.0
            assert fit.exponent == 0.0

    def test_default_functions_fit(self):
        fits, cases, results = interpolation_check(lattice=(4, 9, 7))
        assert len(fits) == 4 and len(cases) == 5
        assert all(fit.feasible() for fit in fits.values())
        assert all(r.passed for r in results)

    def test_homogeneity(self):
        from degenpde.verification import default_interpolation_functions
        base = default_interpolation_functions(2)
        doubled = [2 * u for u in base]
        f1, _, _ = interpolation_check(functions=base, lattice=(4, 9, 7))
        f2, _, _ = interpolation_check(functions=doubled, lattice=(4, 9, 7))
        for key in f1:
            assert f1[key].constant == f2[key].constant
            assert f1[key].exponent == f2[key].exponent


class TestSchauderAndBoundary:
    def test_ratio_finite_and_deterministic(self):
        field = homogeneous_drift(1.0)
        problem = manufactured_problem(field, "inner_bump")
        grid = Grid.build(2, 2.0, 2.0, 13, 13, 0.5, 9)
        rep1, u1 = schauder_ratio(problem, grid, n_points=400)
        rep2, u2 = schauder_ratio(problem, grid, n_points=400)
        assert 0 < rep1.ratio < np.inf
        assert rep1.ratio == rep2.ratio
        assert len(rep1.reports) >= 6

    def test_first_layer_weighted_hessian_oracle(self):
        grid = Grid.build(2, 2.0, 2.0, 9, 9, 0.5, 4)
        gf = GridFunction.from_callable(grid, lambda t, x1, x2: x2 ** 2)
        got = first_layer_weighted_hessian(gf)
        assert abs(got - 2.0 * grid.axes[1][1]) <= 1e-9

    def test_boundary_vanishing_two_levels(self):
        field = homogeneous_drift(1.0)
        g = manufactured_problem(field, "inner_bump", x_extent=3.0,
                                 height=2.0).g
        res, vals = boundary_vanishing_check(field, g,
                                             [(9, 9, 5), (9, 17, 5)])
        assert len(vals) == 2
        assert res.passed
        assert vals[1] < vals[0]


class TestRoundTrip:
    def test_unit_corner_field(self):
        f = constant_field([[2.0, 1.0], [1.0, 1.0]], [1.0, 2.0], -0.5,
                           name="unit-corner")
        res, plan = reduction_round_trip(f, n_lateral=17, n_height=17,
                                         n_slices=9)
        assert res.passed, res.line()
        assert plan.certificates["model_diffusion"] <= 1e-12
        assert res.lhs <= res.rhs


def test_check_csv_format():
    field = homogeneous_drift(1.0)
    res = check_quadratic_supersolution(field, seed=1)
    text = checks_to_csv([res])
    header, row = text.strip().split("\n")
    assert header == ",".join(CHECK_CSV_COLUMNS)
    assert row.endswith(",pass")
    assert "[pass]" in res.line()
