"""Coefficient families of the degenerate operator and their validation.

A field supplies the data (a, b, c) of the operator

    L u = u_t - x_d * sum_ij a^ij u_{x_i x_j} - sum_i b^i u_{x_i} - c u

on the upper half-space {x_d > 0}.  The diffusion matrix is multiplied by
the height coordinate, so ellipticity degenerates linearly at the bottom
boundary; wellposedness without a boundary condition there rests on the
inward drift b^d >= nu > 0 at height 0.

Declared metadata (delta, K, nu) are the constants of the standing
assumption: uniform ellipticity of a on low heights and of x_d * a on
high heights, coefficient bounds and Holder constants up to K, inward
drift at least nu, and linear coefficient growth.  validate_assumptions
estimates each quantity by seeded sampling and compares against the
declaration with a slack factor; sampling can only underestimate suprema,
so the slack guards the comparison direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .analytic import _TIME, parse_expression, space_symbols
from .grid import Region
from .metrics import cycloidal_distance_arrays, parabolic_distance_arrays


class CoefficientField:
    """Symbolically defined coefficients with vectorized evaluation."""

    def __init__(self, d, a_sym, b_sym, c_sym, delta, K, nu, name="custom"):
        self.d = d
        self.a_sym = sp.Matrix(a_sym)
        self.b_sym = sp.Matrix(b_sym)
        self.c_sym = sp.sympify(c_sym)
        if self.a_sym.shape != (d, d) or self.b_sym.shape != (d, 1):
            raise ValueError("coefficient shapes do not match dimension")
        for i in range(d):
            for j in range(i + 1, d):
                if sp.simplify(self.a_sym[i, j] - self.a_sym[j, i]) != 0:
                    raise ValueError("diffusion matrix must be symmetric")
        self.delta = float(delta)
        self.K = float(K)
        self.nu = float(nu)
        self.name = name
        self.symbols = (_TIME,) + tuple(space_symbols(d))
        self._cache = {}

    @property
    def time_dependent(self):
        free = set()
        for e in list(self.a_sym) + list(self.b_sym) + [self.c_sym]:
            free |= e.free_symbols
        return _TIME in free

    def _fn(self, key, expr):
        fn = self._cache.get(key)
        if fn is None:
            raw = sp.lambdify(self.symbols, expr, modules="numpy")

            def fn(t, x, _raw=raw):
                t = np.asarray(t, dtype=float)
                x = np.asarray(x, dtype=float)
                out = _raw(t, *(x[..., i] for i in range(self.d)))
                return np.broadcast_to(np.asarray(out, dtype=float),
                                       np.broadcast_shapes(t.shape,
                                                           x.shape[:-1])).copy()

            self._cache[key] = fn
        return fn

    def a(self, t, x):
        """Diffusion matrix at (t, x); shape (..., d, d)."""
        cols = [self._fn(("a", i, j), self.a_sym[i, j])(t, x)
                for i in range(self.d) for j in range(self.d)]
        out = np.stack(cols, axis=-1)
        return out.reshape(out.shape[:-1] + (self.d, self.d))

    def b(self, t, x):
        cols = [self._fn(("b", i), self.b_sym[i])(t, x)
                for i in range(self.d)]
        return np.stack(cols, axis=-1)

    def c(self, t, x):
        return self._fn("c", self.c_sym)(t, x)

    def is_constant(self):
        return all(len(e.free_symbols) == 0
                   for e in list(self.a_sym) + list(self.b_sym)
                   + [self.c_sym])

    def constant_parts(self):
        """(a, b, c) as plain arrays; only for constant-coefficient fields."""
        if not self.is_constant():
            raise ValueError("field has nonconstant coefficients")
        a = np.array(self.a_sym, dtype=float)
        b = np.array(self.b_sym, dtype=float).ravel()
        c = float(self.c_sym)
        return a, b, c

    def __repr__(self):
        return ("CoefficientField(%s, d=%d, delta=%g, K=%g, nu=%g)"
                % (self.name, self.d, self.delta, self.K, self.nu))


def heston(kappa, theta, sigma, rho, r=0.0, q=0.0):
    """Stochastic-volatility pricing coefficients in two variables.

    x1 is log-price, x2 the variance; the variance process has reversion
    speed kappa toward level theta with vol-of-vol sigma and correlation
    rho.  The inward drift at zero variance is kappa * theta and the
    diffusion matrix is constant with determinant sigma^2 (1-rho^2) / 4,
    so |rho| = 1 is rejected as degenerate.
    """
    if kappa <= 0 or theta <= 0 or sigma <= 0:
        raise ValueError("kappa, theta, sigma must be positive")
    if abs(rho) >= 1:
        raise ValueError("correlation must satisfy |rho| < 1; the diffusion "
                         "matrix is singular at |rho| = 1")
    y = space_symbols(2)[1]
    a = [[sp.Rational(1, 2), sp.Float(rho * sigma / 2)],
         [sp.Float(rho * sigma / 2), sp.Float(sigma ** 2 / 2)]]
    b = [sp.Float(r - q) - y / 2, sp.Float(kappa) * (sp.Float(theta) - y)]
    c = sp.Float(-r)
    amat = np.array([[0.5, rho * sigma / 2],
                     [rho * sigma / 2, sigma ** 2 / 2]])
    delta = float(np.linalg.eigvalsh(amat)[0])
    a_abs = float(np.sum(np.abs(amat)))
    K = max(float(np.max(np.abs(amat))),
            abs(r - q) + 1.0, kappa * (theta + 2.0), abs(r),
            6.0 * max(0.5, kappa),
            a_abs + abs(r - q) + kappa * (theta + 1.0) + abs(r) + 1.0)
    return CoefficientField(2, a, b, c, delta, K, kappa * theta,
                            name="heston")


def homogeneous_drift(nu, d=2):
    """Unit diffusion, constant inward drift nu > 0, no zeroth order."""
    if nu <= 0:
        raise ValueError("inward drift must be positive")
    if d < 2:
        raise ValueError("dimension must be >= 2")
    a = sp.eye(d)
    b = [sp.Integer(0)] * (d - 1) + [sp.Float(nu)]
    # growth constant: sup (x_d tr(a) + nu) / (1 + |x|) = max(d, nu)
    return CoefficientField(d, a, b, sp.Integer(0), 1.0,
                            max(float(d), nu, 1.0), nu,
                            name="homogeneous-drift")


def constant_field(a, b, c, name="constant"):
    """Field with constant (a, b, c); a must be symmetric positive definite."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = len(b)
    if a.shape != (d, d) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("diffusion matrix must be symmetric, shape (d, d)")
    lams = np.linalg.eigvalsh(a)
    if lams[0] <= 0:
        raise ValueError("diffusion matrix must be positive definite")
    K = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), abs(float(c)),
            float(np.sum(np.abs(a))) + float(np.sum(np.abs(b)))
            + abs(float(c)), 1.0)
    return CoefficientField(
        d, [[sp.Float(a[i, j]) for j in range(d)] for i in range(d)],
        [sp.Float(v) for v in b], sp.Float(c),
        float(lams[0]), K, float(b[-1]), name=name)


def from_expressions(d, a_texts, b_texts, c_text, delta, K, nu,
                     name="custom"):
    """Field from elementary-function expression strings in t, x1..xd."""
    a = [[parse_expression(a_texts[i][j], d) for j in range(d)]
         for i in range(d)]
    b = [parse_expression(s, d) for s in b_texts]
    c = parse_expression(c_text, d)
    return CoefficientField(d, a, b, c, delta, K, nu, name=name)


@dataclass
class AssumptionReport:
    """Sampled estimates of the standing-assumption constants."""

    field_name: str
    n_samples: int
    seed: int
    slack: float
    alpha: float
    delta_hat: float
    delta_interior_hat: float
    nu_hat: float
    K_hat: float
    c_max_hat: float
    holder_s_hat: float
    holder_rho_hat: float
    growth_hat: float
    flags: dict

    @property
    def passed(self):
        return all(self.flags.values())

    def as_rows(self):
        rows = [("delta_hat", self.delta_hat, self.flags["ellipticity_low"]),
                ("delta_interior_hat", self.delta_interior_hat,
                 self.flags["ellipticity_high"]),
                ("nu_hat", self.nu_hat, self.flags["inward_drift"]),
                ("K_hat", self.K_hat, self.flags["bounds"]),
                ("c_max_hat", self.c_max_hat, self.flags["zeroth_order"]),
                ("holder_s_hat", self.holder_s_hat, self.flags["holder_s"]),
                ("holder_rho_hat", self.holder_rho_hat,
                 self.flags["holder_rho"]),
                ("growth_hat", self.growth_hat, self.flags["growth"])]
        return rows

    def summary(self):
        lines = ["assumption check: %s (n=%d, seed=%d, slack=%.3g)"
                 % (self.field_name, self.n_samples, self.seed, self.slack)]
        for name, value, ok in self.as_rows():
            lines.append("  %-22s %-24.17g %s"
                         % (name, value, "pass" if ok else "FAIL"))
        lines.append("  overall: %s" % ("pass" if self.passed else "FAIL"))
        return "\n".join(lines)


def _holder_quotients(field, t1, x1, t2, x2, dist, alpha, weight_a=None):
    """Max Holder quotient over all coefficient entries for given pairs."""
    keep = (dist > 0) & (dist <= 1.0)
    if not np.any(keep):
        return 0.0
    t1, x1, t2, x2 = t1[keep], x1[keep], t2[keep], x2[keep]
    dist = dist[keep]
    best = 0.0
    a1, a2 = field.a(t1, x1), field.a(t2, x2)
    if weight_a is not None:
        a1 = a1 * weight_a(x1)[..., None, None]
        a2 = a2 * weight_a(x2)[..., None, None]
    diff_a = np.abs(a1 - a2).reshape(len(dist), -1)
    best = max(best, float(np.max(diff_a / dist[:, None] ** alpha)))
    diff_b = np.abs(field.b(t1, x1) - field.b(t2, x2))
    best = max(best, float(np.max(diff_b / dist[:, None] ** alpha)))
    diff_c = np.abs(field.c(t1, x1) - field.c(t2, x2))
    best = max(best, float(np.max(diff_c / dist ** alpha)))
    return best


def _paired_samples(rng, region, n, height_lo, height_hi):
    """Base points in a height band plus nearby perturbed partners."""
    d = region.d
    t1 = rng.uniform(region.t_lo, region.t_hi, n)
    x1 = rng.uniform(region.x_lo, region.x_hi, (n, d))
    x1[:, -1] = rng.uniform(height_lo, height_hi, n)
    scale = rng.uniform(0.0, 0.4, (n, 1)) * rng.uniform(0, 1, (n, d))
    x2 = x1 + scale * rng.choice([-1.0, 1.0], (n, d))
    x2[:, -1] = np.clip(x2[:, -1], height_lo, height_hi)
    for i in range(d - 1):
        x2[:, i] = np.clip(x2[:, i], region.x_lo[i], region.x_hi[i])
    t2 = np.clip(t1 + rng.uniform(-0.2, 0.2, n), region.t_lo, region.t_hi)
    return t1, x1, t2, x2


def validate_assumptions(field, region=None, n_samples=2000, seed=0,
                         slack=1.05, alpha=0.5):
    """Estimate the assumption constants by sampling and compare.

    Lower-bound constants (delta, nu) must be met up to 1/slack, suprema
    (K and the Holder/growth constants) up to a factor slack.  Holder
    quotients are taken over perturbed pairs at metric distance <= 1, the
    range the assumption constrains.
    """
    d = field.d
    if region is None:
        region = Region(0.0, 1.0, tuple([-4.0] * (d - 1) + [0.0]),
                        tuple([4.0] * (d - 1) + [4.0]))
    rng = np.random.default_rng(seed)
    top = region.x_hi[-1]

    t_low, x_low = region.sample(rng, n_samples)
    x_low[:, -1] = rng.uniform(0.0, min(2.0, top), n_samples)
    a_low = field.a(t_low, x_low)
    a_low = 0.5 * (a_low + np.swapaxes(a_low, -1, -2))
    delta_hat = float(np.min(np.linalg.eigvalsh(a_low)[..., 0]))
    K_hat = max(float(np.max(np.abs(a_low))),
                float(np.max(np.abs(field.b(t_low, x_low)))),
                float(np.max(np.abs(field.c(t_low, x_low)))))

    t_bd, x_bd = region.sample(rng, n_samples)
    x_bd[:, -1] = 0.0
    nu_hat = float(np.min(field.b(t_bd, x_bd)[:, -1]))

    if top > 2.0:
        t_hi, x_hi = region.sample(rng, n_samples)
        x_hi[:, -1] = rng.uniform(2.0, top, n_samples)
        a_hi = field.a(t_hi, x_hi) * x_hi[:, -1, None, None]
        a_hi = 0.5 * (a_hi + np.swapaxes(a_hi, -1, -2))
        delta_interior_hat = float(np.min(np.linalg.eigvalsh(a_hi)[..., 0]))
    else:
        delta_interior_hat = float("inf")

    t_all, x_all = region.sample(rng, n_samples)
    a_all = np.abs(field.a(t_all, x_all)) * x_all[:, -1, None, None]
    num = (a_all.reshape(n_samples, -1).sum(axis=1)
           + np.abs(field.b(t_all, x_all)).sum(axis=1)
           + np.abs(field.c(t_all, x_all)))
    growth_hat = float(np.max(num / (1.0 + np.linalg.norm(x_all, axis=1))))
    c_max_hat = float(np.max(field.c(t_all, x_all)))

    t1, x1, t2, x2 = _paired_samples(rng, region, n_samples, 0.0,
                                     min(2.0, top))
    holder_s_hat = _holder_quotients(
        field, t1, x1, t2, x2,
        cycloidal_distance_arrays(t1, x1, t2, x2), alpha)
    if top > 2.0:
        t1, x1, t2, x2 = _paired_samples(rng, region, n_samples, 2.0, top)
        holder_rho_hat = _holder_quotients(
            field, t1, x1, t2, x2,
            parabolic_distance_arrays(t1, x1, t2, x2), alpha,
            weight_a=lambda x: x[:, -1])
    else:
        holder_rho_hat = 0.0

    tol = 1e-12
    flags = {
        "ellipticity_low": delta_hat >= field.delta / slack - tol,
        "ellipticity_high": (delta_interior_hat == float("inf")
                             or delta_interior_hat >= field.delta / slack
                             - tol),
        "inward_drift": nu_hat >= field.nu / slack - tol and nu_hat > 0,
        "bounds": K_hat <= field.K * slack + tol,
        "zeroth_order": c_max_hat <= field.K * slack + tol,
        "holder_s": holder_s_hat <= field.K * slack + tol,
        "holder_rho": holder_rho_hat <= field.K * slack + tol,
        "growth": growth_hat <= field.K * slack + tol,
    }
    return AssumptionReport(field.name, n_samples, seed, slack, alpha,
                            delta_hat, delta_interior_hat, nu_hat, K_hat,
                            c_max_hat, holder_s_hat, holder_rho_hat,
                            growth_hat, flags)
