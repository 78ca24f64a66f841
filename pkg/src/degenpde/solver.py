"""Finite-difference solver for the degenerate Cauchy problem.

Spatial discretization on the truncated box: second-order centered
differences for the height-weighted diffusion (three-point formulas that
stay second order on the graded axis), first-order upwinding for the
drift, and no equation modification at the bottom boundary: the diffusion
coefficient vanishes identically at height 0 and the inward drift is
differenced forward into the domain, which is exactly how the continuous
problem avoids needing a boundary condition there.  Lateral and top
truncation faces carry Dirichlet data, by default the initial condition
frozen in time; verification runs that know the exact solution may
request exact boundary values instead so artificial-boundary error does
not contaminate convergence measurements.

Each implicit step solves (I + theta dt A) u_new = rhs with BiCGStab and
diagonal preconditioning.  For theta = 1 the system matrix is checked to
be an M-matrix (nonpositive off-diagonal entries, positive dominance
margin); mixed second derivatives break the sign condition, so runs with
correlated diffusion must explicitly opt out of certification.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sparse
import sympy as sp
from scipy.sparse.linalg import bicgstab

from .analytic import _TIME, AnalyticFunction, bump, space_symbols
from .grid import Grid, GridFunction


class SolverError(RuntimeError):
    pass


class CertificateError(SolverError):
    pass


@dataclass
class CauchyProblem:
    """Data (f, g) for L u = f, u(0, .) = g, on a coefficient field."""

    field: object
    f: AnalyticFunction | None
    g: AnalyticFunction
    exact: AnalyticFunction | None = None
    name: str = "problem"

    def __post_init__(self):
        for fn in (self.f, self.g, self.exact):
            if fn is not None and fn.d != self.field.d:
                raise ValueError("data dimension does not match field")

    def f_values(self, t, nodes):
        if self.f is None:
            return np.zeros(len(nodes))
        return self.f.value(float(t), nodes)


@dataclass
class MonotonicityCertificate:
    """M-matrix check of one implicit system matrix."""

    passed: bool
    offdiag_max: float
    margin_min: float
    offending_node: tuple | None
    detail: str

    def require(self):
        if not self.passed:
            raise CertificateError(
                "monotonicity certificate failed at node %s (%s); "
                "reduce the time step, refine the grid, or solve with "
                "certify=False" % (self.offending_node, self.detail))


def discretize_operator(field, grid, t):
    """Assemble the spatial operator A at time t as a CSR matrix.

    Rows of truncation (Dirichlet) nodes are left empty; the implicit
    matrix I + theta dt A therefore has identity rows there.  Returns
    (A, flat Dirichlet mask).
    """
    d = grid.d
    shape = grid.shape
    N = int(np.prod(shape))
    nodes = grid.nodes()
    idx = np.indices(shape).reshape(d, N)
    strides = np.array([int(np.prod(shape[i + 1:], dtype=np.int64))
                        for i in range(d)])
    dir_flat = grid.dirichlet_mask().ravel()
    free = ~dir_flat
    height = nodes[:, -1]

    t_arr = np.full(N, float(t))
    a_vals = field.a(t_arr, nodes)
    b_vals = field.b(t_arr, nodes)
    c_vals = field.c(t_arr, nodes)

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    flat = np.arange(N)
    diffs = [np.diff(ax) for ax in grid.axes]

    for i in range(d):
        k = idx[i]
        n_i = shape[i]
        dx = diffs[i]
        hm = dx[np.clip(k - 1, 0, n_i - 2)]
        hp = dx[np.clip(k, 0, n_i - 2)]
        sl = strides[i]

        # pure second derivative, coefficient height * a_ii
        kappa = height * a_vals[:, i, i]
        ok = free & (k >= 1) & (k <= n_i - 2) & (kappa != 0.0)
        if np.any(ok):
            f_ = flat[ok]
            km, kp, kap = hm[ok], hp[ok], kappa[ok]
            add(f_, f_ - sl, -kap * 2.0 / (km * (km + kp)))
            add(f_, f_, kap * 2.0 / (km * kp))
            add(f_, f_ + sl, -kap * 2.0 / (kp * (km + kp)))

        # upwinded drift
        beta = b_vals[:, i]
        fwd = free & (beta != 0.0) & ((beta > 0) | (k == 0)) & (k <= n_i - 2)
        if np.any(fwd):
            f_ = flat[fwd]
            w = beta[fwd] / hp[fwd]
            add(f_, f_, w)
            add(f_, f_ + sl, -w)
        bwd = free & (beta < 0) & (k >= 1)
        bwd &= ~fwd
        if np.any(bwd):
            f_ = flat[bwd]
            w = beta[bwd] / hm[bwd]
            add(f_, f_, -w)
            add(f_, f_ - sl, w)

        # mixed second derivatives as products of centered first
        # differences; both signs appear among the weights, which is what
        # breaks the M-matrix property when a_ij != 0
        for j in range(i + 1, d):
            kj = idx[j]
            n_j = shape[j]
            dxj = diffs[j]
            hmj = dxj[np.clip(kj - 1, 0, n_j - 2)]
            hpj = dxj[np.clip(kj, 0, n_j - 2)]
            slj = strides[j]
            kappa2 = 2.0 * height * a_vals[:, i, j]
            ok = (free & (k >= 1) & (k <= n_i - 2)
                  & (kj >= 1) & (kj <= n_j - 2) & (kappa2 != 0.0))
            if not np.any(ok):
                continue
            f_ = flat[ok]
            kap = kappa2[ok]
            wi = [(-hp[ok] / (hm[ok] * (hm[ok] + hp[ok])), -sl),
                  ((hp[ok] - hm[ok]) / (hm[ok] * hp[ok]), 0),
                  (hm[ok] / (hp[ok] * (hm[ok] + hp[ok])), sl)]
            wj = [(-hpj[ok] / (hmj[ok] * (hmj[ok] + hpj[ok])), -slj),
                  ((hpj[ok] - hmj[ok]) / (hmj[ok] * hpj[ok]), 0),
                  (hmj[ok] / (hpj[ok] * (hmj[ok] + hpj[ok])), slj)]
            for w1, o1 in wi:
                for w2, o2 in wj:
                    add(f_, f_ + o1 + o2, -kap * w1 * w2)

    # zeroth order
    if np.any(free & (c_vals != 0.0)):
        ok = free & (c_vals != 0.0)
        add(flat[ok], flat[ok], -c_vals[ok])

    if rows:
        A = sparse.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N)).tocsr()
    else:
        A = sparse.csr_matrix((N, N))
    return A, dir_flat


def monotonicity_certificate(A, dt, theta, grid):
    """Check that I + theta dt A is an M-matrix candidate.

    Requires every off-diagonal entry nonpositive and a positive
    dominance margin diag - sum|offdiag| in every row.
    """
    B = (sparse.eye(A.shape[0], format="csr")
         + (theta * dt) * A).tocsr()
    C = B.copy()
    C.setdiag(0.0)
    C.eliminate_zeros()
    scale = max(1.0, float(np.max(np.abs(B.data))) if B.nnz else 1.0)
    tol = 1e-12 * scale
    offdiag_max = float(C.data.max()) if C.nnz else 0.0
    diag = B.diagonal()
    abs_rows = np.asarray(np.abs(B).sum(axis=1)).ravel() - np.abs(diag)
    margin = diag - abs_rows
    margin_min = float(np.min(margin))
    passed = offdiag_max <= tol and margin_min > 0.0
    node = None
    detail = "ok"
    if not passed:
        if offdiag_max > tol:
            k = int(np.argmax(C.data))
            row = int(np.searchsorted(C.indptr, k, side="right") - 1)
            node = np.unravel_index(row, grid.shape)
            detail = "positive off-diagonal entry %.3g" % offdiag_max
        else:
            row = int(np.argmin(margin))
            node = np.unravel_index(row, grid.shape)
            detail = "nonpositive dominance margin %.3g" % margin_min
    return MonotonicityCertificate(passed, offdiag_max, margin_min, node,
                                   detail)


@dataclass
class SolveReport:
    theta: float
    rtol: float
    certificate: MonotonicityCertificate | None
    steps: list = dc_field(default_factory=list)
    wall_time: float = 0.0

    def max_iterations(self):
        return max((s[1] for s in self.steps), default=0)

    def max_residual(self):
        return max((s[2] for s in self.steps), default=0.0)


def solve_cauchy(problem, grid, theta=1.0, certify=None, boundary="frozen",
                 rtol=1e-10):
    """March the theta-scheme over the grid; returns (u, SolveReport).

    certify defaults to True for theta = 1 and raises on certificate
    failure; pass certify=False to run uncertified (needed for fields
    with mixed second derivatives).  boundary is 'frozen' (initial data
    held fixed on the truncation faces) or 'exact' (sample
    problem.exact there each step).
    """
    if certify is None:
        certify = theta == 1.0
    if boundary not in ("frozen", "exact"):
        raise ValueError("boundary must be 'frozen' or 'exact'")
    if boundary == "exact" and problem.exact is None:
        raise ValueError("exact boundary values need problem.exact")
    start = time.perf_counter()
    field = problem.field
    N = int(np.prod(grid.shape))
    nodes = grid.nodes()
    dt = grid.dt
    if np.max(np.abs(np.diff(grid.times) - dt)) > 1e-12 * max(dt, 1.0):
        raise ValueError("time axis must be uniform")

    u = problem.g.value(0.0, nodes)
    A, dir_flat = discretize_operator(field, grid, grid.times[0])
    eye = sparse.eye(N, format="csr")

    cert = None
    report = SolveReport(theta, rtol, None)
    maxiter = int(np.ceil(10.0 * np.sqrt(N)))

    values = np.empty((grid.n_t, N))
    values[0] = u

    B = None
    precond = None
    f_new = problem.f_values(grid.times[0], nodes)
    f_new[dir_flat] = 0.0
    for n in range(grid.n_t - 1):
        t_new = grid.times[n + 1]
        if field.time_dependent and n > 0:
            A, _ = discretize_operator(field, grid, t_new)
            B = None
        if B is None:
            B = (eye + (theta * dt) * A).tocsr()
            if certify:
                cert = monotonicity_certificate(A, dt, theta, grid)
                cert.require()
                report.certificate = cert
            db = B.diagonal()
            precond = sparse.diags(1.0 / db)
        f_old = f_new
        f_new = problem.f_values(t_new, nodes)
        f_new[dir_flat] = 0.0
        rhs = u + dt * (theta * f_new + (1.0 - theta) * f_old)
        if theta != 1.0:
            rhs -= (1.0 - theta) * dt * (A @ u)
        if boundary == "frozen":
            rhs[dir_flat] = u[dir_flat]
        else:
            rhs[dir_flat] = problem.exact.value(float(t_new),
                                                nodes[dir_flat])
        if np.linalg.norm(rhs) == 0.0:
            u = np.zeros(N)
            report.steps.append((n + 1, 0, 0.0))
        else:
            iters = [0]

            def count(_xk):
                iters[0] += 1

            x, info = bicgstab(B, rhs, x0=u, rtol=rtol, atol=0.0,
                               maxiter=maxiter, M=precond, callback=count)
            res = float(np.linalg.norm(B @ x - rhs)
                        / np.linalg.norm(rhs))
            if info != 0 or not np.all(np.isfinite(x)):
                raise SolverError(
                    "linear solve failed at step %d (info=%s, rel "
                    "residual %.3g after %d iterations)"
                    % (n + 1, info, res, iters[0]))
            u = x
            report.steps.append((n + 1, iters[0], res))
        values[n + 1] = u

    report.wall_time = time.perf_counter() - start
    out = GridFunction(grid, values.reshape((grid.n_t,) + grid.shape))
    return out, report


def apply_discrete_operator(w, field, theta=1.0):
    """Discrete L applied to a grid function.

    Returns an array of shape (n_t - 1, *spatial) holding
    (w_new - w_old)/dt + theta A w_new + (1-theta) A w_old at free nodes
    and NaN at truncation nodes, matching what solve_cauchy enforces.
    """
    grid = w.grid
    N = int(np.prod(grid.shape))
    dt = grid.dt
    flat = w.values.reshape(grid.n_t, N)
    out = np.full((grid.n_t - 1, N), np.nan)
    A, dir_flat = discretize_operator(field, grid, grid.times[0])
    free = ~dir_flat
    for n in range(grid.n_t - 1):
        if field.time_dependent:
            A_new, _ = discretize_operator(field, grid, grid.times[n + 1])
        else:
            A_new = A
        lw = (flat[n + 1] - flat[n]) / dt + theta * (A_new @ flat[n + 1])
        if theta != 1.0:
            lw += (1.0 - theta) * (A @ flat[n])
        out[n, free] = lw[free]
    return out.reshape((grid.n_t - 1,) + grid.shape)


def manufactured_solution(field, kind, x_extent=2.0, height=2.0):
    """Registered exact solutions for convergence and round-trip studies.

    'constant'      u = 1, exact at any resolution;
    'affine_height' u = e^-t (1 + height coordinate), spatially exact so
                    only the time error is visible;
    'inner_bump'    u = 1 + e^-t * product bump supported strictly inside
                    the lateral and top faces (so frozen boundary data are
                    exact) and touching the bottom boundary.
    """
    d = field.d
    syms = space_symbols(d)
    if kind == "constant":
        expr = sp.Integer(1)
    elif kind == "affine_height":
        expr = sp.exp(-_TIME) * (1 + syms[-1])
    elif kind == "inner_bump":
        prof = bump(d, [0.0] * (d - 1) + [0.0],
                    [0.6 * x_extent] * (d - 1) + [0.6 * height])
        expr = 1 + sp.exp(-_TIME) * prof.expr
    else:
        raise ValueError("unknown manufactured solution %r" % (kind,))
    return AnalyticFunction(d, expr)


def operator_apply(field, u):
    """f = L u computed symbolically from a field and analytic function."""
    d = field.d
    syms = space_symbols(d)
    lap = sp.Integer(0)
    for i in range(d):
        for j in range(d):
            lap += field.a_sym[i, j] * sp.diff(u.expr, syms[i], syms[j])
    drift = sum(field.b_sym[i] * sp.diff(u.expr, syms[i]) for i in range(d))
    f_expr = (sp.diff(u.expr, _TIME) - syms[-1] * lap - drift
              - field.c_sym * u.expr)
    return AnalyticFunction(d, f_expr)


def manufactured_problem(field, kind, x_extent=2.0, height=2.0):
    """Cauchy problem whose exact solution is the registered member.

    The right side is built symbolically, f = L u, so its values and the
    initial data are exact.
    """
    u = manufactured_solution(field, kind, x_extent, height)
    f = operator_apply(field, u)
    g = AnalyticFunction(field.d, u.expr.subs(_TIME, 0))
    return CauchyProblem(field, f, g, exact=u,
                         name="mms-%s-%s" % (field.name, kind))


@dataclass
class ConvergenceStudy:
    mode: str
    rows: list
    order: float | None

    def summary(self):
        lines = ["convergence (%s refinement)" % self.mode,
                 "  %-12s %-12s %-16s" % ("h", "dt", "sup error")]
        for h, dt, err in self.rows:
            lines.append("  %-12.6g %-12.6g %-16.10g" % (h, dt, err))
        if self.order is None:
            lines.append("  order fit skipped (errors at machine precision)")
        else:
            lines.append("  fitted order: %.4f" % self.order)
        return "\n".join(lines)


def convergence_study(field, kind, ladder, x_extent=2.0, height=2.0,
                      t_final=1.0, theta=1.0, mode="space",
                      boundary="frozen", grading="quadratic",
                      certify=None):
    """Solve the manufactured problem across a grid ladder and fit order.

    ladder is a list of (n_lateral, n_height, n_slices).  The error is
    the sup over the audited region and all time slices; the order is the
    least-squares slope of log error against log h (mode 'space', h the
    largest spatial spacing) or log dt (mode 'time').
    """
    problem = manufactured_problem(field, kind, x_extent, height)
    rows = []
    for n_lat, n_h, n_sl in ladder:
        grid = Grid.build(field.d, x_extent, height, n_lat, n_h, t_final,
                          n_sl, grading=grading)
        u, _ = solve_cauchy(problem, grid, theta=theta, boundary=boundary,
                            certify=certify)
        exact = GridFunction.from_callable(grid,
                                           problem.exact.grid_callable())
        mask = grid.audited_mask()
        err = float(np.max(np.abs(u.values - exact.values)[:, mask]))
        rows.append((grid.max_spacing(), grid.dt, err))
    errs = np.array([r[2] for r in rows])
    if np.max(errs) < 1e-13:
        order = None
    else:
        xs = np.log([r[0] if mode == "space" else r[1] for r in rows])
        order = float(np.polyfit(xs, np.log(np.maximum(errs, 1e-300)),
                                 1)[0])
    return ConvergenceStudy(mode, rows, order)
