"""Cycloidal and parabolic distances and the Holder norms built on them.

The cycloidal distance between P1 = (t1, x1) and P2 = (t2, x2) is

    s(P1, P2) = sum_i |dx_i| / (sqrt(h1) + sqrt(h2) + sqrt(sum_lat |dx_i|))
                + sqrt(|dt|),

where h1, h2 are the heights (last coordinates) and the inner square root
runs over the lateral offsets only.  When both points sit on the
degenerate boundary with equal lateral parts the spatial term is 0.  The
parabolic distance drops the denominator: rho = sum_i |dx_i| + sqrt(|dt|).
Near the boundary s stretches spatial offsets like |dx| / sqrt(height),
which is what makes the weighted Holder norms below see boundary behavior
that the parabolic norms miss.

Seminorm estimation enumerates point pairs exhaustively below a cap and
falls back to seeded pair sampling above it, so every reported value is a
certified lower bound of the true supremum over the sampled region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFunction, SpaceTimePoint

EXHAUSTIVE_CAP = 50_000
SAMPLED_PAIRS = 200_000


def _unpack(p):
    if isinstance(p, SpaceTimePoint):
        return float(p.t), np.asarray(p.x, dtype=float)
    t, x = p
    return float(t), np.asarray(x, dtype=float)


def cycloidal_distance_arrays(t1, x1, t2, x2):
    """Vectorized cycloidal distance; x arrays have shape (..., d)."""
    dx = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    num = dx.sum(axis=-1)
    lateral = dx[..., :-1].sum(axis=-1)
    den = (np.sqrt(np.asarray(x1, dtype=float)[..., -1])
           + np.sqrt(np.asarray(x2, dtype=float)[..., -1])
           + np.sqrt(lateral))
    # num > 0 forces den > 0; the 0/0 case is defined as 0
    space = np.divide(num, den, out=np.zeros_like(num), where=num > 0)
    return space + np.sqrt(np.abs(np.asarray(t1, dtype=float)
                                  - np.asarray(t2, dtype=float)))


def parabolic_distance_arrays(t1, x1, t2, x2):
    dx = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    return dx.sum(axis=-1) + np.sqrt(np.abs(np.asarray(t1, dtype=float)
                                            - np.asarray(t2, dtype=float)))


def cycloidal_distance(p1, p2):
    t1, x1 = _unpack(p1)
    t2, x2 = _unpack(p2)
    return float(cycloidal_distance_arrays(t1, x1, t2, x2))


def parabolic_distance(p1, p2):
    t1, x1 = _unpack(p1)
    t2, x2 = _unpack(p2)
    return float(parabolic_distance_arrays(t1, x1, t2, x2))


_METRICS = {"s": cycloidal_distance_arrays, "rho": parabolic_distance_arrays}


def slab_equivalence_constants(d, y0, y1, n_pairs, seed, t_hi=1.0,
                               x_extent=4.0):
    """Empirical two-sided comparison of s and rho on a height slab.

    Samples pairs with heights in [y0, y1] (y0 > 0), plus a handful of
    pure-time pairs whose ratio is exactly 1, and returns
    (c_lower, c_upper, all_hold) where the constants are the extreme
    observed ratios s/rho and all_hold confirms every sampled pair
    satisfies c_lower * rho <= s <= c_upper * rho.
    """
    if y0 <= 0 or y1 <= y0:
        raise ValueError("need 0 < y0 < y1")
    rng = np.random.default_rng(seed)
    m = int(n_pairs)
    t1 = rng.uniform(0.0, t_hi, m)
    t2 = rng.uniform(0.0, t_hi, m)
    x1 = rng.uniform(-x_extent, x_extent, (m, d))
    x2 = rng.uniform(-x_extent, x_extent, (m, d))
    x1[:, -1] = rng.uniform(y0, y1, m)
    x2[:, -1] = rng.uniform(y0, y1, m)
    n_time = max(2, m // 1000)
    x2[:n_time] = x1[:n_time]
    t2[:n_time] = np.minimum(t1[:n_time] + 0.1, t_hi + 0.1)
    s = cycloidal_distance_arrays(t1, x1, t2, x2)
    rho = parabolic_distance_arrays(t1, x1, t2, x2)
    keep = rho > 0
    ratio = s[keep] / rho[keep]
    c_lower = float(np.min(ratio))
    c_upper = float(np.max(ratio))
    all_hold = bool(np.all(c_lower * rho[keep] <= s[keep] + 1e-15)
                    and np.all(s[keep] <= c_upper * rho[keep] + 1e-15))
    return c_lower, c_upper, all_hold


@dataclass
class SeminormEstimate:
    """Lower bound of a Holder seminorm with the maximizing pair."""

    value: float
    n_pairs: int
    argmax_p1: SpaceTimePoint | None = None
    argmax_p2: SpaceTimePoint | None = None


@dataclass
class PointSet:
    """Evaluation points for norm estimation."""

    t: np.ndarray
    x: np.ndarray

    @property
    def size(self):
        return len(self.t)

    def subset(self, mask):
        return PointSet(self.t[mask], self.x[mask])

    def point(self, k):
        return SpaceTimePoint(float(self.t[k]), tuple(self.x[k]))


def grid_point_set(grid, mask=None, n_max=4000, seed=0):
    """Points drawn from (time slice, spatial node) combinations.

    Returns (PointSet, time indices, flat spatial indices); the indices
    let callers gather values of several grid functions at identical
    points. Subsampling beyond n_max is seeded and deterministic.
    """
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    flat = np.flatnonzero(mask.ravel())
    n_t = grid.n_t
    total = n_t * len(flat)
    nodes = grid.nodes()
    if total <= n_max:
        ti = np.repeat(np.arange(n_t), len(flat))
        si = np.tile(flat, n_t)
    else:
        rng = np.random.default_rng(seed)
        pick = rng.choice(total, size=n_max, replace=False)
        pick.sort()
        ti, pos = np.divmod(pick, len(flat))
        si = flat[pos]
    return (PointSet(grid.times[ti], nodes[si]), ti, si)


def gather(gridfn, ti, si):
    """Values of a grid function at (time index, flat node index) pairs."""
    return gridfn.values.reshape(gridfn.grid.n_t, -1)[ti, si]


def _pair_indices(m, exhaustive_cap, sampled_pairs, seed):
    total = m * (m - 1) // 2
    if total <= exhaustive_cap:
        return np.triu_indices(m, k=1)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, size=sampled_pairs)
    j = rng.integers(0, m - 1, size=sampled_pairs)
    j = j + (j >= i)
    return i, j


def seminorm(values, points, alpha, metric, exhaustive_cap=EXHAUSTIVE_CAP,
             sampled_pairs=SAMPLED_PAIRS, seed=0):
    """Holder seminorm estimate sup |u(P1)-u(P2)| / dist(P1,P2)^alpha."""
    if metric not in _METRICS:
        raise ValueError("metric must be 's' or 'rho'")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    m = points.size
    if m < 2:
        return SeminormEstimate(0.0, 0)
    values = np.asarray(values, dtype=float)
    i, j = _pair_indices(m, exhaustive_cap, sampled_pairs, seed)
    dist = _METRICS[metric](points.t[i], points.x[i], points.t[j], points.x[j])
    diff = np.abs(values[i] - values[j])
    quot = np.divide(diff, dist ** alpha,
                     out=np.zeros_like(diff), where=dist > 0)
    k = int(np.argmax(quot)) if len(quot) else 0
    if len(quot) == 0 or quot[k] == 0.0:
        return SeminormEstimate(0.0, len(quot))
    return SeminormEstimate(float(quot[k]), len(quot),
                            points.point(i[k]), points.point(j[k]))


def weight(points, q):
    """(1 + |x|)^q with the Euclidean spatial norm."""
    if q == 0:
        return np.ones(points.size)
    return (1.0 + np.linalg.norm(points.x, axis=1)) ** q


@dataclass
class HolderReport:
    """One norm estimate; maps to a single CSV row."""

    metric: str
    alpha: float
    q: float
    sup: float
    seminorm: float
    total: float
    n_pairs: int
    argmax_p1: SpaceTimePoint | None = None
    argmax_p2: SpaceTimePoint | None = None


def _fmt_point(p):
    if p is None:
        return ""
    coords = ",".join("%.17g" % c for c in p.x)
    return "t=%.17g;x=(%s)" % (p.t, coords)


HOLDER_CSV_COLUMNS = ("metric", "alpha", "q", "sup", "seminorm", "total",
                      "n_pairs", "argmax_p1", "argmax_p2")


def holder_reports_to_csv(reports):
    lines = [",".join(HOLDER_CSV_COLUMNS)]
    for r in reports:
        lines.append(",".join([
            r.metric, "%.17g" % r.alpha, "%.17g" % r.q, "%.17g" % r.sup,
            "%.17g" % r.seminorm, "%.17g" % r.total, "%d" % r.n_pairs,
            '"%s"' % _fmt_point(r.argmax_p1), '"%s"' % _fmt_point(r.argmax_p2),
        ]))
    return "\n".join(lines) + "\n"


def holder_norm(values, points, alpha, metric, q=0.0, **kw):
    """Plain single-metric norm: sup + seminorm, optional weight q.

    With q != 0 both the sup and the seminorm are taken of the weighted
    function (1+|x|)^q * u.
    """
    w = weight(points, q)
    wv = w * np.asarray(values, dtype=float)
    sup = float(np.max(np.abs(wv))) if points.size else 0.0
    est = seminorm(wv, points, alpha, metric, **kw)
    return HolderReport(metric, alpha, q, sup, est.value, sup + est.value,
                        est.n_pairs, est.argmax_p1, est.argmax_p2)


def split_holder_norm(values, points, alpha, q=0.0, split_height=1.0, **kw):
    """Weighted norm of order alpha on the split region.

    Cycloidal seminorm where the height is <= split_height, parabolic
    seminorm where it is >= split_height (the interface belongs to both),
    plus the weighted sup.  This is the norm the solution theory is
    phrased in; q = 0 recovers the unweighted version.
    """
    w = weight(points, q)
    wv = w * np.asarray(values, dtype=float)
    sup = float(np.max(np.abs(wv))) if points.size else 0.0
    h = points.x[:, -1]
    low = h <= split_height + 1e-12
    high = h >= split_height - 1e-12
    est_s = seminorm(wv[low], points.subset(low), alpha, "s", **kw)
    est_r = seminorm(wv[high], points.subset(high), alpha, "rho", **kw)
    semi = est_s.value + est_r.value
    best = est_s if est_s.value >= est_r.value else est_r
    return HolderReport("split", alpha, q, sup, semi, sup + semi,
                        est_s.n_pairs + est_r.n_pairs,
                        best.argmax_p1, best.argmax_p2)


def analytic_constituents(u, points):
    """Value arrays of u, u_t, grad u and height * D^2 u at the points.

    Returns (vals, dt_vals, [du_i], [h * ddu_ij]) using exact derivative
    closures; the height weight multiplies every second derivative.
    """
    d = u.d
    t, x = points.t, points.x
    h = x[:, -1]
    vals = u.value(t, x)
    dt_vals = u.dt(t, x)
    du = [u.dx(i, t, x) for i in range(d)]
    wdd = [h * u.dxx(i, j, t, x) for i in range(d) for j in range(i, d)]
    return vals, dt_vals, du, wdd


def grid_constituents(u, ti, si):
    """Same constituents as analytic_constituents but finite-differenced."""
    d = u.grid.d
    vals = gather(u, ti, si)
    dt_vals = gather(u.time_derivative(), ti, si)
    du = [gather(u.derivative(i), ti, si) for i in range(d)]
    wdd = [gather(u.second_derivative(i, j).weighted_by_height(), ti, si)
           for i in range(d) for j in range(i, d)]
    return vals, dt_vals, du, wdd


def order2_norm(constituents, points, alpha, q=0.0, split_height=1.0, **kw):
    """Weighted norm of order 2+alpha from precomputed constituents.

    Sum of the split norms of u, u_t, the worst first derivative and the
    worst height-weighted second derivative; returns (total, reports)
    where reports carries one row per constituent plus the total row.
    """
    vals, dt_vals, du, wdd = constituents
    reports = []
    r_u = split_holder_norm(vals, points, alpha, q, split_height, **kw)
    r_t = split_holder_norm(dt_vals, points, alpha, q, split_height, **kw)
    r_du = [split_holder_norm(v, points, alpha, q, split_height, **kw)
            for v in du]
    r_dd = [split_holder_norm(v, points, alpha, q, split_height, **kw)
            for v in wdd]
    best_du = max(r_du, key=lambda r: r.total)
    best_dd = max(r_dd, key=lambda r: r.total)
    total = r_u.total + r_t.total + best_du.total + best_dd.total
    reports.extend([r_u, r_t, best_du, best_dd])
    return total, reports


def metric_order2_norm(u, points, alpha, metric, **kw):
    """Single-metric norm of order 2+alpha of an analytic function.

    The cycloidal version weights second derivatives by the height; the
    parabolic version uses them unweighted.
    """
    d = u.d
    t, x = points.t, points.x
    parts = [holder_norm(u.value(t, x), points, alpha, metric, **kw),
             holder_norm(u.dt(t, x), points, alpha, metric, **kw)]
    first = [holder_norm(u.dx(i, t, x), points, alpha, metric, **kw)
             for i in range(d)]
    h = x[:, -1]
    if metric == "s":
        second = [holder_norm(h * u.dxx(i, j, t, x), points, alpha,
                              metric, **kw)
                  for i in range(d) for j in range(i, d)]
    else:
        second = [holder_norm(u.dxx(i, j, t, x), points, alpha, metric, **kw)
                  for i in range(d) for j in range(i, d)]
    total = (parts[0].total + parts[1].total
             + max(r.total for r in first) + max(r.total for r in second))
    return total, parts + first + second


def transform_seminorm_bounds(w1, M, alpha, region, n_points=400, seed=0):
    """Two-sided parabolic-seminorm comparison under x -> M x, M SPD.

    w2(t, x) := w1(t, M x) is compared with w1 through the eigenvalue
    range of M: the forward constant divides [w1] by
    (1 + lmin^(-alpha)) [w2] and the backward constant divides [w2] by
    (1 + lmax^alpha) [w1].  Both are finite for nonconstant w1 and are
    invariant under rescaling w1.
    """
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("transform matrix must be symmetric")
    lams = np.linalg.eigvalsh(M)
    if lams[0] <= 0:
        raise ValueError("transform matrix must be positive definite")
    lmin, lmax = float(lams[0]), float(lams[-1])
    rng = np.random.default_rng(seed)
    t, x = region.sample(rng, n_points)
    pts2 = PointSet(t, x)
    pts1 = PointSet(t, x @ M.T)
    w2 = w1.affine_pullback(M)
    v1 = w1.value(pts1.t, pts1.x)
    v2 = w2.value(pts2.t, pts2.x)
    s1 = seminorm(v1, pts1, alpha, "rho", seed=seed)
    s2 = seminorm(v2, pts2, alpha, "rho", seed=seed)
    out = {
        "lambda_min": lmin, "lambda_max": lmax,
        "seminorm_w1": s1.value, "seminorm_w2": s2.value,
        "c_forward": s1.value / ((1.0 + lmin ** (-alpha)) * s2.value)
        if s2.value > 0 else float("inf"),
        "c_backward": s2.value / ((1.0 + lmax ** alpha) * s1.value)
        if s1.value > 0 else float("inf"),
    }
    return out
