"""Space-time grids on the truncated half-space slab.

The spatial domain is the box [-X, X]^(d-1) x [0, Y]: the last coordinate
is the degenerate direction and its axis starts exactly at 0.  Lateral axes
are uniform; the height axis is either uniform or quadratically graded
toward the bottom so that nodes cluster near the degenerate boundary.
Time is a uniform axis on [0, T].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def fd_weights(xs, x0, der):
    """Finite-difference weights on arbitrary nodes (Fornberg's algorithm).

    Returns w with sum_j w[j] * f(xs[j]) ~ f^(der)(x0), exact for
    polynomials of degree  len(xs) - 1.
    """
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if der >= n:
        raise ValueError("need more than %d nodes for derivative %d" % (n, der))
    c = np.zeros((n, der + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, n):
        mn = min(i, der)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, der]


def diff_matrix(x, order):
    """Dense differentiation matrix along one axis.

    Centered three-point stencils in the interior, one-sided second-order
    stencils at the ends (four nodes for second derivatives when
    available, three otherwise).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("axis needs at least 3 nodes")
    D = np.zeros((n, n))
    for k in range(1, n - 1):
        D[k, k - 1:k + 2] = fd_weights(x[k - 1:k + 2], x[k], order)
    edge = 4 if (order == 2 and n >= 4) else 3
    D[0, :edge] = fd_weights(x[:edge], x[0], order)
    D[n - 1, n - edge:] = fd_weights(x[n - edge:], x[n - 1], order)
    return D


def apply_along_axis(D, values, axis):
    """Apply matrix D along one axis of an nd-array."""
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(D, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point (t, x) of the closed slab, x[-1] >= 0."""

    t: float
    x: tuple

    @property
    def height(self):
        return self.x[-1]

    def as_arrays(self):
        return np.asarray([self.t]), np.asarray([self.x], dtype=float)


@dataclass(frozen=True)
class Region:
    """Axis-aligned space-time box used for sampling and audits."""

    t_lo: float
    t_hi: float
    x_lo: tuple
    x_hi: tuple

    def __post_init__(self):
        if len(self.x_lo) != len(self.x_hi):
            raise ValueError("bound dimension mismatch")
        if self.x_lo[-1] < 0:
            raise ValueError("height bound must be nonnegative")

    @property
    def d(self):
        return len(self.x_lo)

    def sample(self, rng, n):
        """Uniform points: (t array of shape (n,), x array of shape (n, d))."""
        t = rng.uniform(self.t_lo, self.t_hi, size=n)
        x = rng.uniform(self.x_lo, self.x_hi, size=(n, self.d))
        return t, x


class Grid:
    """Tensor-product space-time grid.

    Attributes
    ----------
    axes : tuple of 1-d arrays, one per spatial coordinate.  The last axis
        starts at exactly 0.
    times : 1-d array of time slices, times[0] == 0.
    """

    def __init__(self, axes, times):
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        times = np.asarray(times, dtype=float)
        for a in axes:
            if len(a) < 3:
                raise ValueError("every spatial axis needs at least 3 nodes")
            if np.any(np.diff(a) <= 0):
                raise ValueError("axis nodes must increase strictly")
        if axes[-1][0] != 0.0:
            raise ValueError("height axis must start at 0")
        if len(times) < 2 or times[0] != 0.0:
            raise ValueError("time axis must start at 0 with >= 2 slices")
        self.axes = axes
        self.times = times

    @classmethod
    def build(cls, d, x_extent, height, n_lateral, n_height, t_final,
              n_slices, grading="quadratic"):
        """Standard truncated box [-X, X]^(d-1) x [0, Y] x [0, T].

        grading 'quadratic' places height nodes at Y*(j/(n-1))^2, which
        clusters them near the degenerate boundary; 'uniform' is the
        evenly spaced alternative.
        """
        if d < 2:
            raise ValueError("spatial dimension must be >= 2")
        lateral = np.linspace(-x_extent, x_extent, n_lateral)
        j = np.arange(n_height, dtype=float) / (n_height - 1)
        if grading == "quadratic":
            vert = height * j ** 2
        elif grading == "uniform":
            vert = height * j
        else:
            raise ValueError("unknown grading %r" % (grading,))
        axes = tuple([lateral.copy() for _ in range(d - 1)] + [vert])
        times = np.linspace(0.0, t_final, n_slices)
        return cls(axes, times)

    @property
    def d(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def n_t(self):
        return len(self.times)

    @property
    def dt(self):
        return self.times[1] - self.times[0]

    @property
    def t_final(self):
        return float(self.times[-1])

    def meshes(self):
        """List of d arrays of the spatial shape holding node coordinates."""
        return list(np.meshgrid(*self.axes, indexing="ij"))

    def nodes(self):
        """All spatial nodes as an (N, d) array in row-major node order."""
        mesh = self.meshes()
        return np.stack([m.ravel() for m in mesh], axis=1)

    def dirichlet_mask(self):
        """True at truncation nodes: lateral faces and the top face.

        The degenerate boundary (height 0) carries no condition.
        """
        mask = np.zeros(self.shape, dtype=bool)
        for i in range(self.d - 1):
            idx_lo = [slice(None)] * self.d
            idx_lo[i] = 0
            mask[tuple(idx_lo)] = True
            idx_hi = [slice(None)] * self.d
            idx_hi[i] = -1
            mask[tuple(idx_hi)] = True
        idx_top = [slice(None)] * self.d
        idx_top[-1] = -1
        mask[tuple(idx_top)] = True
        return mask

    def audited_mask(self, margin_frac=0.25):
        """True on the audited subregion away from the truncation faces.

        Lateral coordinates within (1 - margin_frac) * X of the center and
        heights below (1 - margin_frac) * Y are kept; the outer margin
        absorbs artificial-boundary error.
        """
        mask = np.ones(self.shape, dtype=bool)
        mesh = self.meshes()
        for i in range(self.d - 1):
            ext = np.max(np.abs(self.axes[i]))
            mask &= np.abs(mesh[i]) <= (1.0 - margin_frac) * ext + 1e-12
        top = self.axes[-1][-1]
        mask &= mesh[-1] <= (1.0 - margin_frac) * top + 1e-12
        return mask

    def audited_region(self, margin_frac=0.25):
        lo = [float(a[0]) for a in self.axes]
        hi = [float(a[-1]) for a in self.axes]
        for i in range(self.d - 1):
            ext = max(abs(lo[i]), abs(hi[i]))
            lo[i], hi[i] = -(1 - margin_frac) * ext, (1 - margin_frac) * ext
        hi[-1] = (1 - margin_frac) * hi[-1]
        return Region(float(self.times[0]), float(self.times[-1]),
                      tuple(lo), tuple(hi))

    def max_spacing(self):
        return max(float(np.max(np.diff(a))) for a in self.axes)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (len(self.axes) == len(other.axes)
                and all(np.array_equal(a, b)
                        for a, b in zip(self.axes, other.axes))
                and np.array_equal(self.times, other.times))


@dataclass
class GridFunction:
    """Scalar values on every (time slice, spatial node) of a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expect = (self.grid.n_t,) + self.grid.shape
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != expect:
            raise ValueError("value shape %s does not match grid %s"
                             % (self.values.shape, expect))

    @classmethod
    def from_callable(cls, grid, fn):
        """Sample fn(t, x1, ..., xd) with broadcasting over mesh arrays."""
        mesh = grid.meshes()
        vals = np.empty((grid.n_t,) + grid.shape)
        for n, t in enumerate(grid.times):
            vals[n] = np.broadcast_to(fn(t, *mesh), grid.shape)
        return cls(grid, vals)

    def copy(self):
        return GridFunction(self.grid, self.values.copy())

    def sup(self, mask=None):
        """Max of |values|, optionally restricted by a spatial mask."""
        if mask is None:
            return float(np.max(np.abs(self.values)))
        return float(np.max(np.abs(self.values[:, mask])))

    def time_derivative(self):
        D = diff_matrix(self.grid.times, 1)
        return GridFunction(self.grid, apply_along_axis(D, self.values, 0))

    def derivative(self, i):
        """First spatial derivative along coordinate i (0-based)."""
        D = diff_matrix(self.grid.axes[i], 1)
        return GridFunction(self.grid, apply_along_axis(D, self.values, 1 + i))

    def second_derivative(self, i, j):
        """Second spatial derivative; pure 3-point stencil when i == j."""
        if i == j:
            D = diff_matrix(self.grid.axes[i], 2)
            return GridFunction(self.grid,
                                apply_along_axis(D, self.values, 1 + i))
        return self.derivative(i).derivative(j)

    def weighted_by_height(self):
        """Multiply nodewise by the height coordinate x_d."""
        mesh = self.grid.meshes()
        return GridFunction(self.grid, self.values * mesh[-1])
