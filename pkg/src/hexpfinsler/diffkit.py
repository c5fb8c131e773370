"""Exact forward-mode derivatives of scalar fields f(x, y).

Derivatives are obtained with nested dual numbers ("duals of duals"): every
nesting level carries one first-order perturbation, tagged by its level so
that perturbations of different levels never mix.  All seed directions of a
request are packed along a trailing numpy axis, so a full jet (up to third
order in ``y`` plus mixed first order in ``x``) costs one evaluation of ``f``.

A scalar field is any callable ``f(x, y)`` taking two sequences of length n
whose entries are floats, numpy arrays or :class:`Dual` numbers, written with
ordinary arithmetic plus the elementwise functions of this module
(:func:`sqrt`, :func:`exp`, ...).
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Dual",
    "Jet",
    "FDReport",
    "EvaluationDomainError",
    "jet_eval",
    "fd_check",
    "value_of",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "absolute",
]

ScalarField = Callable[[Sequence, Sequence], object]


class EvaluationDomainError(ValueError):
    """Raised when a field evaluates to a non-finite number."""

    def __init__(self, x, y, what: str = "non-finite value"):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        super().__init__(f"evaluation-domain error ({what}) at x={self.x.tolist()}, y={self.y.tolist()}")


def _level(v) -> int:
    return v.level if isinstance(v, Dual) else 0


class Dual:
    """First-order dual number ``re + du*eps`` at nesting ``level``.

    ``re`` and ``du`` are numbers of strictly lower level (floats, arrays or
    inner duals).  Operands of a lower level are constants at this level.
    """

    __slots__ = ("re", "du", "level")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, re, du, level: int):
        self.re = re
        self.du = du
        self.level = level

    def __repr__(self) -> str:
        return f"Dual(level={self.level}, re={self.re!r}, du={self.du!r})"

    def __add__(self, other):
        lo = other.level if type(other) is Dual else 0
        if lo > self.level:
            return NotImplemented
        if lo == self.level:
            return Dual(self.re + other.re, self.du + other.du, self.level)
        return Dual(self.re + other, self.du, self.level)

    __radd__ = __add__

    def __sub__(self, other):
        lo = _level(other)
        if lo > self.level:
            return NotImplemented
        if lo == self.level:
            return Dual(self.re - other.re, self.du - other.du, self.level)
        return Dual(self.re - other, self.du, self.level)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du, self.level)

    def __neg__(self):
        return Dual(-self.re, -self.du, self.level)

    def __pos__(self):
        return self

    def __mul__(self, other):
        lo = other.level if type(other) is Dual else 0
        if lo > self.level:
            return NotImplemented
        if lo == self.level:
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re, self.level)
        return Dual(self.re * other, self.du * other, self.level)

    __rmul__ = __mul__

    def __truediv__(self, other):
        lo = _level(other)
        if lo > self.level:
            return NotImplemented
        if lo == self.level:
            q = self.re / other.re
            return Dual(q, (self.du - q * other.du) / other.re, self.level)
        return Dual(self.re / other, self.du / other, self.level)

    def __rtruediv__(self, other):
        q = other / self.re
        return Dual(q, -q * self.du / self.re, self.level)

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        if p == 2:
            return self * self
        return Dual(self.re**p, p * self.re ** (p - 1) * self.du, self.level)

    def __rpow__(self, base):
        return exp(self * math.log(base))

    # comparisons look at the real part only
    def __lt__(self, other):
        return value_of(self) < value_of(other)

    def __le__(self, other):
        return value_of(self) <= value_of(other)

    def __gt__(self, other):
        return value_of(self) > value_of(other)

    def __ge__(self, other):
        return value_of(self) >= value_of(other)


def value_of(v):
    """Strip all perturbation parts."""
    while isinstance(v, Dual):
        v = v.re
    return v


def _chain(v, f, df):
    """Apply a scalar function with derivative ``df`` (both generic)."""
    if isinstance(v, Dual):
        return Dual(f(v.re), df(v.re) * v.du, v.level)
    return f(v)


def sqrt(v):
    if isinstance(v, Dual):
        r = sqrt(v.re)
        return Dual(r, v.du / (2.0 * r), v.level)
    return np.sqrt(v)


def exp(v):
    if isinstance(v, Dual):
        e = exp(v.re)
        return Dual(e, e * v.du, v.level)
    return np.exp(v)


def log(v):
    if isinstance(v, Dual):
        return Dual(log(v.re), v.du / v.re, v.level)
    return np.log(v)


def sin(v):
    return _chain(v, sin, cos) if isinstance(v, Dual) else np.sin(v)


def cos(v):
    return _chain(v, cos, lambda u: -sin(u)) if isinstance(v, Dual) else np.cos(v)


def absolute(v):
    """|v|; the derivative is undefined (NaN) where the value is exactly 0."""
    if isinstance(v, Dual):
        s = np.sign(np.asarray(value_of(v), dtype=float))
        s = np.where(s == 0.0, np.nan, s)
        return Dual(absolute(v.re), s * v.du, v.level)
    return np.abs(v)


@dataclass(frozen=True)
class Jet:
    """Derivatives of f at (x, y); leading axes are batch axes.

    ``dx_dy[..., m, i]`` is d/dx^m d/dy^i f and ``dx_dy2[..., m, i, j]`` is
    d/dx^m d/dy^i d/dy^j f.  Slots not requested are ``None``.
    """

    value: np.ndarray
    dy: np.ndarray | None = None
    dy2: np.ndarray | None = None
    dy3: np.ndarray | None = None
    dx: np.ndarray | None = None
    dx_dy: np.ndarray | None = None
    dx_dy2: np.ndarray | None = None


def _component(v, path, depth):
    for level in range(depth, 0, -1):
        take = path[level - 1]
        if isinstance(v, Dual) and v.level == level:
            v = v.du if take else v.re
        elif take:
            return 0.0
    return v


@functools.lru_cache(maxsize=64)
def _plan(n: int, order_y: int, with_x: bool):
    """Seeds and the linear map from dual components to distinct derivatives."""
    depth = order_y if order_y > 0 else (1 if with_x else 0)
    combos = list(itertools.combinations_with_replacement(range(n), order_y)) if order_y else []
    if with_x:
        tails = list(itertools.combinations_with_replacement(range(n), max(order_y - 1, 0)))
        combos += [(n + m,) + t for m in range(n) for t in tails]
    if depth == 0:
        combos = [()]
    K = len(combos)
    seeds = []
    for a in range(2 * n):
        per_level = []
        for level in range(1, depth + 1):
            seed = np.array([1.0 if c[level - 1] == a else 0.0 for c in combos])
            per_level.append(seed if seed.any() else 0.0)
        seeds.append(per_level)
    paths = list(itertools.product((0, 1), repeat=depth))
    keys: dict[tuple, int] = {}
    rows, cols = [], []
    for p_idx, path in enumerate(paths):
        for c, combo in enumerate(combos):
            key = tuple(sorted(combo[l] for l in range(depth) if path[l]))
            rows.append(p_idx * K + c)
            cols.append(keys.setdefault(key, len(keys)))
    W = np.zeros((len(paths) * K, len(keys)))
    W[rows, cols] = 1.0
    W /= W.sum(axis=0, keepdims=True)  # average duplicate estimates

    def index(rank, offset=()):
        idx = np.empty((n,) * rank, dtype=int)
        for t in itertools.product(range(n), repeat=rank):
            idx[t] = keys[tuple(sorted(t)) + offset]
        return idx

    layout = {"value": keys[()]}
    for r, name in ((1, "dy"), (2, "dy2"), (3, "dy3")):
        if order_y >= r:
            layout[name] = index(r)
    if with_x:
        layout["dx"] = np.array([keys[(n + m,)] for m in range(n)])
        if order_y >= 2:
            layout["dx_dy"] = np.stack([index(1, (n + m,)) for m in range(n)])
        if order_y >= 3:
            layout["dx_dy2"] = np.stack([index(2, (n + m,)) for m in range(n)])
    return depth, K, seeds, paths, W, layout


def jet_eval(f: ScalarField, x, y, order_y: int = 2, with_x: bool = False) -> Jet:
    """Evaluate f and its derivatives exactly at (x, y).

    ``x`` and ``y`` have shape (..., n).  With ``with_x`` the x-gradient and
    the mixed derivatives dx_dy^k for k < order_y are also returned (so the
    mixed jet has the same total order as the y-jet).
    """
    if not 0 <= order_y <= 3:
        raise ValueError("order_y must be in 0..3")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    n = y.shape[-1]
    batch = y.shape[:-1]
    depth, K, seeds, paths, W, layout = _plan(n, order_y, bool(with_x))

    z = np.concatenate([y, x], axis=-1)
    variables = []
    for a in range(2 * n):
        v = z[..., a][..., None]
        for level in range(1, depth + 1):
            v = Dual(v, seeds[a][level - 1], level)
        variables.append(v)

    with np.errstate(all="ignore"):
        out = f(variables[n:], variables[:n])

    shape = batch + (K,)
    comps = np.concatenate(
        [np.broadcast_to(np.asarray(_component(out, path, depth), dtype=float), shape) for path in paths],
        axis=-1,
    )
    with np.errstate(all="ignore"):
        values = comps @ W
    parts = {name: values[..., idx] for name, idx in layout.items()}
    value = parts.pop("value")

    bad = ~np.isfinite(values).all(axis=-1)
    if np.any(bad):
        first = tuple(np.argwhere(np.atleast_1d(bad))[0]) if batch else ()
        raise EvaluationDomainError(x[first], y[first])
    return Jet(value=value, **parts)


@dataclass
class FDReport:
    """Comparison of exact jets against central finite differences."""

    step: float
    first: float = math.nan
    second: float = math.nan
    warnings: list[str] = field(default_factory=list)
    domain_error: str | None = None

    @property
    def max_deviation(self) -> float:
        return max(self.first, self.second)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.domain_error is None and not self.warnings and self.max_deviation < tol


def _plain(f, x, y):
    with np.errstate(all="ignore"):
        out = np.asarray(value_of(f(list(x), list(y))), dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvaluationDomainError(x, y)
    return float(out)


def fd_check(f: ScalarField, x, y, step: float = 1e-4) -> FDReport:
    """Max relative deviation between jets and central differences at one point.

    First derivatives (in y and x) and second y-derivatives are compared; the
    relative deviation uses max(|exact|, 1) as the scale.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    report = FDReport(step=step)
    try:
        jet = jet_eval(f, x, y, order_y=2, with_x=True)
        f0 = _plain(f, x, y)
        eye = np.eye(n) * step

        def rel(a, b):
            return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)))

        gy = np.array([(_plain(f, x, y + e) - _plain(f, x, y - e)) / (2 * step) for e in eye])
        gx = np.array([(_plain(f, x + e, y) - _plain(f, x - e, y)) / (2 * step) for e in eye])
        hy = np.empty((n, n))
        for i, j in itertools.product(range(n), repeat=2):
            ei, ej = eye[i], eye[j]
            hy[i, j] = (
                _plain(f, x, y + ei + ej)
                - _plain(f, x, y + ei - ej)
                - _plain(f, x, y - ei + ej)
                + _plain(f, x, y - ei - ej)
            ) / (4 * step * step)
        report.first = max(rel(gy, jet.dy), rel(gx, jet.dx))
        report.second = rel(hy, jet.dy2)
        noise = np.finfo(float).eps * max(abs(f0), 1.0) / step**2
        if noise > 1e-4:
            report.warnings.append(f"step-underflow: rounding noise ~{noise:.1e} dominates second differences")
    except EvaluationDomainError as err:
        report.domain_error = str(err)
    return report
