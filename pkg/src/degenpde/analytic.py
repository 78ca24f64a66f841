"""Closed-form space-time functions with exact derivatives.

Everything that feeds a norm estimate or a residual check (manufactured
solutions, supersolutions, barriers, test bumps) is represented
symbolically so first and second derivatives are exact rather than
re-differenced.  Evaluation is vectorized through lambdified numpy
closures, built lazily and cached.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

_TIME = sp.Symbol("t", real=True)


def time_symbol():
    return _TIME


def space_symbols(d):
    return sp.symbols("x1:%d" % (d + 1), real=True)


_PARSE_FUNCS = {
    "sin": sp.sin, "cos": sp.cos, "tan": sp.tan, "exp": sp.exp,
    "sqrt": sp.sqrt, "log": sp.log, "pi": sp.pi, "E": sp.E,
    "sinh": sp.sinh, "cosh": sp.cosh, "tanh": sp.tanh,
    "Min": sp.Min, "Max": sp.Max,
}


def parse_expression(text, d):
    """Parse a coefficient or data expression in variables t, x1..xd.

    Only elementary functions are allowed; unknown names are an error so
    a typo in a config cannot silently evaluate to zero.
    """
    syms = space_symbols(d)
    local = dict(_PARSE_FUNCS)
    local["t"] = _TIME
    for s in syms:
        local[str(s)] = s
    try:
        expr = sp.parse_expr(text, local_dict=local, evaluate=True)
    except Exception as exc:
        raise ValueError("cannot parse expression %r: %s" % (text, exc))
    allowed = set(syms) | {_TIME}
    extra = expr.free_symbols - allowed
    if extra:
        raise ValueError("expression %r uses unknown symbols %s"
                         % (text, sorted(map(str, extra))))
    undefined = expr.atoms(sp.core.function.AppliedUndef)
    if undefined:
        raise ValueError("expression %r uses unknown functions %s"
                         % (text, sorted({f.func.__name__
                                          for f in undefined})))
    return expr


class AnalyticFunction:
    """Scalar function of (t, x1..xd) with exact derivative closures."""

    def __init__(self, d, expr):
        self.d = d
        self.symbols = (_TIME,) + tuple(space_symbols(d))
        self.expr = sp.sympify(expr)
        extra = self.expr.free_symbols - set(self.symbols)
        if extra:
            raise ValueError("expression has stray symbols %s"
                             % sorted(map(str, extra)))
        self._cache = {}

    @classmethod
    def from_text(cls, text, d):
        return cls(d, parse_expression(text, d))

    def _lambdify(self, key, expr):
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

    def value(self, t, x):
        """Evaluate at t (broadcastable) and x of shape (..., d)."""
        return self._lambdify("v", self.expr)(t, x)

    def dt(self, t, x):
        return self._lambdify("t", sp.diff(self.expr, _TIME))(t, x)

    def dx(self, i, t, x):
        sym = self.symbols[1 + i]
        return self._lambdify(("x", i), sp.diff(self.expr, sym))(t, x)

    def dxx(self, i, j, t, x):
        i, j = min(i, j), max(i, j)
        si, sj = self.symbols[1 + i], self.symbols[1 + j]
        return self._lambdify(("xx", i, j),
                              sp.diff(self.expr, si, sj))(t, x)

    def at(self, t, xpoint):
        return float(self.value(np.asarray(t, dtype=float),
                                np.asarray(xpoint, dtype=float)))

    def grid_callable(self):
        """Adapter for GridFunction.from_callable(t, *mesh arrays)."""

        def fn(t, *mesh):
            x = np.stack(np.broadcast_arrays(*mesh), axis=-1)
            return self.value(np.asarray(t, dtype=float), x)

        return fn

    def __add__(self, other):
        if isinstance(other, AnalyticFunction):
            if other.d != self.d:
                raise ValueError("dimension mismatch")
            return AnalyticFunction(self.d, self.expr + other.expr)
        return AnalyticFunction(self.d, self.expr + sp.sympify(other))

    def __mul__(self, factor):
        return AnalyticFunction(self.d, self.expr * sp.sympify(factor))

    __rmul__ = __mul__

    def affine_pullback(self, A, shift=None):
        """Return v(t, z) = self(t, A z + shift) with exact derivatives."""
        A = np.asarray(A, dtype=float)
        if A.shape != (self.d, self.d):
            raise ValueError("matrix shape mismatch")
        if shift is None:
            shift = np.zeros(self.d)
        zs = space_symbols(self.d)
        subs = {}
        for i, xs in enumerate(self.symbols[1:]):
            subs[xs] = sum(sp.Float(A[i, k]) * zs[k]
                           for k in range(self.d)) + sp.Float(shift[i])
        return AnalyticFunction(self.d, self.expr.subs(subs, simultaneous=True))


def bump(d, center, radius, powers=4):
    """Smooth compactly supported product bump.

    One factor (1 - s^2)^powers per coordinate, s the scaled offset from
    the center; support is the closed box of half-width radius.  With
    powers = 4 the function is C^3, enough for every norm of order 2+a.
    """
    center = np.asarray(center, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (d,))
    syms = space_symbols(d)
    expr = sp.Integer(1)
    for i in range(d):
        s = (syms[i] - sp.Float(center[i])) / sp.Float(radius[i])
        expr *= sp.Piecewise(((1 - s ** 2) ** powers, abs(s) < 1),
                             (0, True))
    return AnalyticFunction(d, expr)
