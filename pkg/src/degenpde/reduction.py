"""Reduction of a constant-coefficient operator to its model form.

Three exact steps take L u = u_t - x_d a:D^2 u - b.grad u - c u to the
normal form  w_t - z_d Lap w - bbar.grad w  on the same half-space:

1. remove the zeroth-order term with the substitution w = exp(-c t) u;
2. shear  y_i = x_i + alpha_i x_d  with alpha_i = -a^id / a^dd, which
   zeroes the mixed row/column of the diffusion matrix and replaces the
   lateral block by its Schur complement  a^ik - a^id a^kd / a^dd;
3. diagonalize the lateral block with a cyclic Jacobi rotation and scale,
   z' = (a^dd)^(-1/2) D^(-1/2) P^T y',  z_d = y_d / a^dd,

after which the diffusion part is exactly z_d times the identity and the
drift becomes bbar = G b with the composed linear map G; in particular
bbar^d = b^d / a^dd, positive whenever the inward-drift assumption holds.
Every step is affine with a closed-form inverse, so grid data can be
pushed back and forth without losing more than interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import sympy as sp

from .analytic import _TIME, AnalyticFunction
from .fields import CoefficientField, constant_field
from .grid import Grid, GridFunction

SIGN_TOL = 1e-12


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps rotate away every off-diagonal pair until the squared
    off-diagonal mass falls below tol times the squared Frobenius norm.
    Eigenvalues are returned ascending; each eigenvector column is signed
    so its first entry larger than 1e-12 in magnitude is positive, making
    the factorization deterministic.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    norm2 = float(np.sum(A * A)) or 1.0
    polish = False
    for _ in range(max_sweeps):
        # summed from the entries themselves: the difference of the two
        # large Frobenius sums cancels to zero long before the entries do
        off = A - np.diag(np.diag(A))
        off2 = float(np.sum(off * off))
        if off2 == 0.0 or polish:
            break
        if off2 <= tol * norm2:
            # one more sweep; quadratic convergence takes the remaining
            # off-diagonal mass to rounding level
            polish = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                V = V @ rot
    else:
        raise RuntimeError("Jacobi sweep did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    V = V[:, order]
    for k in range(n):
        col = V[:, k]
        lead = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if len(lead) and col[lead[0]] < 0:
            V[:, k] = -col
    return w, V


def interp_tensor(axes, values, points):
    """Multilinear interpolation of values on a tensor grid.

    values has shape tuple(len(a) for a in axes); points is (m, d).
    Points outside the hull raise rather than extrapolate.
    """
    d = len(axes)
    points = np.asarray(points, dtype=float)
    m = len(points)
    idx = []
    frac = []
    for i, ax in enumerate(axes):
        span = ax[-1] - ax[0]
        tol = 1e-9 * span
        coords = points[:, i]
        if np.any(coords < ax[0] - tol) or np.any(coords > ax[-1] + tol):
            bad = coords[(coords < ax[0] - tol) | (coords > ax[-1] + tol)]
            raise ValueError("point coordinate %.17g outside axis [%g, %g]; "
                             "refusing to extrapolate"
                             % (bad[0], ax[0], ax[-1]))
        k = np.clip(np.searchsorted(ax, coords, side="right") - 1,
                    0, len(ax) - 2)
        idx.append(k)
        frac.append(np.clip((coords - ax[k]) / (ax[k + 1] - ax[k]), 0.0, 1.0))
    out = np.zeros(m)
    for corner in range(1 << d):
        w = np.ones(m)
        loc = []
        for i in range(d):
            if corner >> i & 1:
                w = w * frac[i]
                loc.append(idx[i] + 1)
            else:
                w = w * (1.0 - frac[i])
                loc.append(idx[i])
        out += w * values[tuple(loc)]
    return out


def pullback_grid_function(u, target_grid, matrix):
    """v(t, z) := u(t, matrix @ z) sampled on target_grid slice by slice."""
    if not np.array_equal(u.grid.times, target_grid.times):
        raise ValueError("time axes must agree")
    matrix = np.asarray(matrix, dtype=float)
    zs = target_grid.nodes()
    xs = zs @ matrix.T
    vals = np.empty((target_grid.n_t,) + target_grid.shape)
    for n in range(u.grid.n_t):
        vals[n] = interp_tensor(u.grid.axes, u.values[n],
                                xs).reshape(target_grid.shape)
    return GridFunction(target_grid, vals)


@dataclass
class ReductionPlan:
    """Affine change of variables taking a field to model form."""

    d: int
    c: float
    alpha: np.ndarray
    eigvals: np.ndarray
    P: np.ndarray
    shear: np.ndarray = dc_field(repr=False)
    scale: np.ndarray = dc_field(repr=False)
    forward: np.ndarray = dc_field(repr=False)
    backward: np.ndarray = dc_field(repr=False)
    b_bar: np.ndarray = dc_field(repr=False)
    certificates: dict = dc_field(repr=False, default_factory=dict)

    def forward_points(self, x):
        """Map source coordinates to model coordinates, z = F x."""
        return np.asarray(x, dtype=float) @ self.forward.T

    def backward_points(self, z):
        return np.asarray(z, dtype=float) @ self.backward.T

    def multiplier(self, t):
        """Recovery factor exp(c t): u = multiplier * (w mapped back)."""
        return np.exp(self.c * np.asarray(t, dtype=float))

    def model_field(self):
        return constant_field(np.eye(self.d), self.b_bar, 0.0,
                              name="model-form")

    def transform_analytic(self, fn, with_multiplier=True):
        """Pull an analytic function of (t, x) back to model coordinates.

        Returns fbar(t, z) = exp(-c t) * fn(t, backward @ z); the
        multiplier implements the zeroth-order elimination and can be
        dropped for functions (like initial data at t = 0) that do not
        carry it.
        """
        out = fn.affine_pullback(self.backward)
        if with_multiplier and self.c != 0.0:
            out = AnalyticFunction(out.d,
                                   sp.exp(sp.Float(-self.c) * _TIME)
                                   * out.expr)
        return out

    def recover_grid_function(self, w, source_grid):
        """Map a model-form solution back: u(t, x) = e^{ct} w(t, F x)."""
        u = pullback_grid_function(w, source_grid, self.forward)
        mult = self.multiplier(source_grid.times)
        return GridFunction(source_grid,
                            u.values * mult[(slice(None),)
                                            + (None,) * source_grid.d])

    def describe(self):
        fmt = lambda M: "\n".join("    " + "  ".join("%.17g" % v for v in row)
                                  for row in np.atleast_2d(M))
        lines = ["reduction plan (d=%d)" % self.d,
                 "  zeroth-order rate c = %.17g" % self.c,
                 "  shear alpha =\n%s" % fmt(self.alpha),
                 "  lateral eigenvalues =\n%s" % fmt(self.eigvals),
                 "  rotation P =\n%s" % fmt(self.P),
                 "  forward matrix =\n%s" % fmt(self.forward),
                 "  backward matrix =\n%s" % fmt(self.backward),
                 "  model drift =\n%s" % fmt(self.b_bar),
                 "  certificates:"]
        for k, v in sorted(self.certificates.items()):
            lines.append("    %-24s %.17g" % (k, v))
        return "\n".join(lines)


def eliminate_zeroth_order(field):
    """Drop the zeroth-order term; returns (c, field with c = 0).

    Only the rate is needed downstream: data pick up the factor
    exp(-c t) and solutions are recovered with exp(+c t).
    """
    if not field.is_constant():
        raise ValueError("zeroth-order elimination needs constant "
                         "coefficients")
    a, b, c = field.constant_parts()
    return c, constant_field(a, b, 0.0, name=field.name + "-nozeroth")


def shear_transform(a):
    """Shear alpha and the sheared diffusion matrix.

    y' = x' + alpha x_d leaves the height alone and produces
    blockdiag(schur(a), a^dd) where schur(a) is the lateral Schur
    complement a' - a_cross a_cross^T / a^dd.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    add = a[d - 1, d - 1]
    if add <= 0:
        raise ValueError("a^dd must be positive")
    alpha = -a[:d - 1, d - 1] / add
    S = np.eye(d)
    S[:d - 1, d - 1] = alpha
    a_sheared = S @ a @ S.T
    return alpha, S, a_sheared


def build_reduction_plan(field):
    """Compose elimination, shear and diagonal scaling; certify each step."""
    if not field.is_constant():
        raise ValueError("reduction requires constant coefficients")
    a, b, c = field.constant_parts()
    d = field.d
    add = a[d - 1, d - 1]
    alpha, S, a_sheared = shear_transform(a)
    lateral = a_sheared[:d - 1, :d - 1]
    eigvals, P = jacobi_eigh(lateral)
    if np.min(eigvals) <= 0:
        raise ValueError("lateral diffusion block is not positive definite")
    G = np.zeros((d, d))
    G[:d - 1, :d - 1] = (P / np.sqrt(eigvals)).T / np.sqrt(add)
    G[d - 1, d - 1] = 1.0 / add
    forward = G @ S
    # closed-form inverse: S^{-1} flips the sign of alpha, G^{-1} is
    # blockdiag(sqrt(add) P D^{1/2}, add)
    Ginv = np.zeros((d, d))
    Ginv[:d - 1, :d - 1] = np.sqrt(add) * (P * np.sqrt(eigvals))
    Ginv[d - 1, d - 1] = add
    Sinv = np.eye(d)
    Sinv[:d - 1, d - 1] = -alpha
    backward = Sinv @ Ginv
    b_bar = forward @ b
    certs = {
        "orthogonality": float(np.max(np.abs(P @ P.T - np.eye(d - 1)))),
        "shear_offdiagonal": float(
            np.max(np.abs(a_sheared[:d - 1, d - 1]))),
    }
    certs["model_diffusion"] = float(
        np.max(np.abs(add * (forward @ a @ forward.T) - np.eye(d))))
    certs["inverse"] = float(np.max(np.abs(forward @ backward - np.eye(d))))
    certs["model_drift_height"] = float(b_bar[-1])
    plan = ReductionPlan(d, c, alpha, eigvals, P, S, G, forward, backward,
                         b_bar, certs)
    return plan
