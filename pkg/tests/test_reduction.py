"""Change of variables to the model form and its certificates."""

import numpy as np
import pytest
import sympy as sp

from degenpde.analytic import AnalyticFunction, space_symbols, time_symbol
from degenpde.fields import constant_field, heston
from degenpde.grid import Grid, GridFunction
from degenpde.reduction import (
    ReductionPlan,
    build_reduction_plan,
    eliminate_zeroth_order,
    interp_tensor,
    jacobi_eigh,
    pullback_grid_function,
    shear_transform,
)
from degenpde.solver import operator_apply


def random_spd(rng, n, spread=2.0):
    M = rng.normal(size=(n, n))
    return M @ M.T + spread * np.eye(n)


class TestJacobi:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_matches_reference_eigensolver(self, n):
        rng = np.random.default_rng(n)
        A = random_spd(rng, n, spread=0.5)
        w, V = jacobi_eigh(A)
        w_ref = np.linalg.eigvalsh(A)
        assert np.allclose(w, w_ref, rtol=1e-12, atol=1e-12)
        assert np.allclose(V @ V.T, np.eye(n), rtol=0, atol=1e-12)
        assert np.allclose(A @ V, V @ np.diag(w), rtol=0, atol=1e-11)

    def test_ascending_and_sign_convention(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            A = rng.normal(size=(4, 4))
            A = A + A.T
            w, V = jacobi_eigh(A)
            assert np.all(np.diff(w) >= -1e-13)
            for k in range(4):
                lead = np.flatnonzero(np.abs(V[:, k]) > 1e-12)[0]
                assert V[lead, k] > 0

    def test_deterministic(self):
        A = [[3.0, 1.0, 0.5], [1.0, 2.0, 0.25], [0.5, 0.25, 1.0]]
        w1, V1 = jacobi_eigh(A)
        w2, V2 = jacobi_eigh(A)
        assert np.array_equal(w1, w2) and np.array_equal(V1, V2)

    def test_diagonal_input_unchanged(self):
        w, V = jacobi_eigh(np.diag([2.0, 1.0, 3.0]))
        assert np.array_equal(w, [1.0, 2.0, 3.0])
        assert np.array_equal(np.abs(V), np.eye(3)[:, [1, 0, 2]])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


class TestShear:
    def test_worked_example(self):
        # the lateral block becomes the Schur complement 2 - 1*1/1 = 1,
        # not the original entry
        alpha, S, sheared = shear_transform([[2.0, 1.0], [1.0, 1.0]])
        assert np.allclose(alpha, [-1.0], rtol=0, atol=1e-15)
        assert np.allclose(sheared, np.eye(2), rtol=0, atol=1e-15)

    def test_block_structure(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_spd(rng, 3)
            alpha, S, sheared = shear_transform(a)
            assert np.allclose(sheared[:-1, -1], 0.0, rtol=0, atol=1e-12)
            assert abs(sheared[-1, -1] - a[-1, -1]) <= 1e-12
            schur = a[:-1, :-1] - np.outer(a[:-1, -1], a[:-1, -1]) / a[-1, -1]
            assert np.allclose(sheared[:-1, :-1], schur, rtol=0, atol=1e-12)

    def test_rejects_nonpositive_corner(self):
        with pytest.raises(ValueError):
            shear_transform([[1.0, 0.0], [0.0, -1.0]])


class TestPlan:
    def test_worked_unit_corner_field(self):
        f = constant_field([[2.0, 1.0], [1.0, 1.0]], [1.0, 2.0], -0.5)
        plan = build_reduction_plan(f)
        for value in plan.certificates.values():
            assert np.isfinite(value)
        assert plan.certificates["orthogonality"] <= 1e-12
        assert plan.certificates["shear_offdiagonal"] <= 1e-12
        assert plan.certificates["model_diffusion"] <= 1e-12
        assert plan.certificates["inverse"] <= 1e-12
        # a^dd = 1: model drift keeps the height component b^d exactly
        assert abs(plan.b_bar[-1] - 2.0) <= 1e-12
        assert abs(plan.certificates["model_drift_height"] - 2.0) <= 1e-12
        assert plan.c == -0.5

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_certificates_random_fields(self, seed):
        rng = np.random.default_rng(seed)
        d = 2 + seed % 2
        a = random_spd(rng, d)
        b = rng.normal(size=d)
        b[-1] = abs(b[-1]) + 0.5
        f = constant_field(a, b, -float(rng.uniform(0, 1)))
        plan = build_reduction_plan(f)
        for key in ("orthogonality", "shear_offdiagonal",
                    "model_diffusion", "inverse"):
            assert plan.certificates[key] <= 1e-12, (key, plan.certificates)
        # height drift transforms by 1/a^dd
        assert abs(plan.b_bar[-1] - b[-1] / a[-1, -1]) <= 1e-12
        assert plan.b_bar[-1] > 0
        z = rng.normal(size=(50, d))
        assert np.allclose(plan.forward_points(plan.backward_points(z)), z,
                           rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", [4, 5, 6])
    def test_operator_equivalence(self, seed):
        # w = exp(-ct) u(t, B z) must satisfy the model equation with the
        # transformed right side: the full algebra in one identity
        rng = np.random.default_rng(seed)
        a = random_spd(rng, 2)
        b = rng.normal(size=2)
        b[-1] = abs(b[-1]) + 0.5
        f = constant_field(a, b, float(rng.uniform(-1, 1)))
        plan = build_reduction_plan(f)

        syms = space_symbols(2)
        t_sym = time_symbol()
        u = AnalyticFunction(
            2, sp.sin(syms[0]) * (1 + syms[1] ** 2)
            + sp.Rational(1, 10) * t_sym * syms[0] + sp.cos(t_sym))
        rhs = operator_apply(f, u)

        w = plan.transform_analytic(u)
        rhs_bar = plan.transform_analytic(rhs)
        model_rhs = operator_apply(plan.model_field(), w)

        t = rng.uniform(0.0, 1.0, 200)
        z = rng.uniform(-2.0, 2.0, (200, 2))
        z[:, -1] = rng.uniform(0.05, 2.0, 200)
        got = model_rhs.value(t, z)
        want = rhs_bar.value(t, z)
        scale = float(np.max(np.abs(want))) + 1.0
        assert np.allclose(got, want, rtol=0, atol=1e-9 * scale)

    def test_multiplier_and_pullbacks(self):
        f = constant_field(np.eye(2), [0.0, 1.0], -0.5)
        plan = build_reduction_plan(f)
        assert abs(plan.multiplier(2.0) - np.exp(-1.0)) <= 1e-15
        syms = space_symbols(2)
        u = AnalyticFunction(2, syms[0] + syms[1])
        plain = plan.transform_analytic(u, with_multiplier=False)
        assert time_symbol() not in plain.expr.free_symbols

    def test_model_field_form(self):
        f = constant_field([[1.0, 0.25], [0.25, 0.5]], [0.3, 0.7], 0.0)
        model = build_reduction_plan(f).model_field()
        a, b, c = model.constant_parts()
        assert np.array_equal(a, np.eye(2))
        assert c == 0.0
        assert b[-1] > 0

    def test_requires_constant_coefficients(self):
        with pytest.raises(ValueError):
            build_reduction_plan(heston(2.0, 0.25, 1.0, 0.3))
        with pytest.raises(ValueError):
            eliminate_zeroth_order(heston(2.0, 0.25, 1.0, 0.3))

    def test_eliminate_zeroth_order(self):
        f = constant_field(np.eye(2), [0.0, 1.0], -0.75)
        c, cleared = eliminate_zeroth_order(f)
        assert c == -0.75
        assert cleared.constant_parts()[2] == 0.0

    def test_describe_mentions_certificates(self):
        f = constant_field(np.eye(2), [0.0, 1.0], 0.0)
        text = build_reduction_plan(f).describe()
        assert "model_diffusion" in text and "forward matrix" in text


class TestInterpolation:
    def test_exact_for_multilinear(self):
        ax = (np.array([0.0, 0.5, 1.25, 2.0]), np.array([-1.0, 0.0, 2.0]))
        X, Y = np.meshgrid(*ax, indexing="ij")
        vals = 2.0 + 3.0 * X - Y + 0.5 * X * Y
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(0, 2, 40), rng.uniform(-1, 2, 40)])
        got = interp_tensor(ax, vals, pts)
        want = 2.0 + 3.0 * pts[:, 0] - pts[:, 1] \
            + 0.5 * pts[:, 0] * pts[:, 1]
        assert np.allclose(got, want, rtol=0, atol=1e-12)

    def test_hits_nodes_exactly(self):
        ax = (np.array([0.0, 1.0, 3.0]),)
        vals = np.array([5.0, -2.0, 7.0])
        got = interp_tensor(ax, vals, np.array([[0.0], [1.0], [3.0]]))
        assert np.array_equal(got, vals)

    def test_refuses_extrapolation(self):
        ax = (np.array([0.0, 1.0]),)
        with pytest.raises(ValueError):
            interp_tensor(ax, np.array([0.0, 1.0]), np.array([[1.5]]))

    def test_pullback_identity(self):
        grid = Grid.build(2, 1.0, 1.0, 5, 5, 1.0, 3)
        gf = GridFunction.from_callable(
            grid, lambda t, x1, x2: np.sin(x1) + x2)
        back = pullback_grid_function(gf, grid, np.eye(2))
        assert np.allclose(back.values, gf.values, rtol=0, atol=1e-12)

    def test_pullback_requires_matching_times(self):
        g1 = Grid.build(2, 1.0, 1.0, 5, 5, 1.0, 3)
        g2 = Grid.build(2, 1.0, 1.0, 5, 5, 1.0, 4)
        gf = GridFunction(g1, np.zeros((3, 5, 5)))
        with pytest.raises(ValueError):
            pullback_grid_function(gf, g2, np.eye(2))


def test_linear_solution_round_trips_exactly():
    # multilinear interpolation reproduces affine functions, so a full
    # map-solve-free round trip of an affine profile is exact
    f = constant_field([[2.0, 1.0], [1.0, 1.0]], [1.0, 2.0], -0.5)
    plan = build_reduction_plan(f)
    source = Grid.build(2, 1.0, 1.0, 7, 7, 0.5, 4)
    syms = space_symbols(2)
    u = AnalyticFunction(2, 1 + syms[0] + 2 * syms[1])
    w_analytic = plan.transform_analytic(u)

    corners = plan.forward_points(
        np.array([[sx, sy] for sx in (-1.0, 1.0) for sy in (0.0, 1.0)]))
    m = float(np.max(np.abs(corners[:, 0]))) * 1.01
    top = float(np.max(corners[:, 1])) * 1.01
    model_grid = Grid((np.linspace(-m, m, 9),
                       np.linspace(0.0, top, 9)), source.times)
    w = GridFunction.from_callable(model_grid, w_analytic.grid_callable())
    back = plan.recover_grid_function(w, source)
    want = GridFunction.from_callable(source, u.grid_callable())
    assert np.allclose(back.values, want.values, rtol=0, atol=1e-12)
