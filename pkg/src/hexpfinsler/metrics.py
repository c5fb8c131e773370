"""Metric zoo, h-vector families and the h-exponential change of metric."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffkit as dk

__all__ = [
    "InadmissibleMetricError",
    "ChangeOverflowError",
    "RiemannianField",
    "AffineCovector",
    "MetricFunction",
    "HVectorField",
    "ChartSpec",
    "HVectorReport",
    "make_metric",
    "make_hvector",
    "hexp_apply",
    "validate_hvector",
    "sample_points",
    "METRIC_KINDS",
    "HVECTOR_FAMILIES",
]

METRIC_KINDS = ("euclidean", "riemannian", "randers", "kropina", "matsumoto", "hexp")
HVECTOR_FAMILIES = ("constant", "gradient", "homothety", "mixed")
DET_FLOOR = 1e-12
TAU_MAX = 50.0


class InadmissibleMetricError(ValueError):
    pass


class ChangeOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class RiemannianField:
    """Position dependent SPD matrix a_ij(x).

    ``kind`` is ``identity``, ``constant`` (``matrix``) or ``conformal``
    (a_ij = exp(2 k.x) delta_ij with ``gradient`` k).
    """

    kind: str = "identity"
    n: int = 2
    matrix: tuple | None = None
    gradient: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "constant", "conformal"):
            raise ValueError(f"unknown Riemannian field {self.kind!r}")
        if self.kind == "constant":
            a = np.asarray(self.matrix, dtype=float)
            if a.shape != (self.n, self.n) or not np.allclose(a, a.T):
                raise InadmissibleMetricError("constant Riemannian matrix must be symmetric n x n")
        if self.kind == "conformal" and len(self.gradient) != self.n:
            raise ValueError("conformal gradient must have n components")

    def conformal_factor(self, x):
        s = sum(k * xi for k, xi in zip(self.gradient, x))
        return dk.exp(2.0 * s)

    def quadratic(self, x, y):
        """a_ij(x) y^i y^j with generic arithmetic."""
        if self.kind == "identity":
            return sum(yi * yi for yi in y)
        if self.kind == "conformal":
            return self.conformal_factor(x) * sum(yi * yi for yi in y)
        a = self.matrix
        total = 0.0
        for i in range(self.n):
            total = total + a[i][i] * y[i] * y[i]
            for j in range(i + 1, self.n):
                total = total + 2.0 * a[i][j] * y[i] * y[j]
        return total

    def numeric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eye = np.eye(self.n)
        if self.kind == "identity":
            return np.broadcast_to(eye, x.shape[:-1] + eye.shape).copy()
        if self.kind == "conformal":
            f = np.exp(2.0 * x @ np.asarray(self.gradient, dtype=float))
            return f[..., None, None] * eye
        return np.broadcast_to(np.asarray(self.matrix, float), x.shape[:-1] + eye.shape).copy()


@dataclass(frozen=True)
class AffineCovector:
    """w_i(x) = p_i + Q_ij x^j."""

    p: tuple
    Q: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.p)

    def __call__(self, x) -> list:
        if self.Q is None:
            return list(self.p)
        return [self.p[i] + sum(self.Q[i][j] * x[j] for j in range(self.n)) for i in range(self.n)]

    def numeric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = np.broadcast_to(np.asarray(self.p, float), x.shape[:-1] + (self.n,))
        if self.Q is not None:
            w = w + x @ np.asarray(self.Q, float).T
        return np.array(w)

    def jacobian(self) -> np.ndarray:
        """d_j w_i as [i, j]."""
        if self.Q is None:
            return np.zeros((self.n, self.n))
        return np.asarray(self.Q, dtype=float)

    def contract(self, x, y):
        w = self(x)
        return sum(wi * yi for wi, yi in zip(w, y))


@dataclass(frozen=True, eq=False)
class MetricFunction:
    """A positively 1-homogeneous fundamental function L(x, y).

    Instances are callables accepting generic scalars, so they can be fed to
    :func:`diffkit.jet_eval` directly.
    """

    kind: str
    n: int
    fn: Callable = field(repr=False)
    params: dict = field(default_factory=dict)
    base: "MetricFunction | None" = None
    hvector: "HVectorField | None" = None

    def __call__(self, x, y):
        return self.fn(x, y)

    def evaluate(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(self.fn([x[..., i] for i in range(self.n)], [y[..., i] for i in range(self.n)]), float)


@dataclass(frozen=True, eq=False)
class HVectorField:
    """b_i(x, y) = a_i(x) + c l_i with constant scalar rho = c."""

    family: str
    a: AffineCovector
    c: float = 0.0

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def rho(self) -> float:
        return self.c

    def beta(self, x, y, L):
        """b_i y^i in generic arithmetic (uses l_i y^i = L)."""
        out = self.a.contract(x, y)
        if self.c != 0.0:
            out = out + self.c * L
        return out

    def jets(self, x, Ljet: dk.Jet):
        """Return (b_i, d b_i/dy^j as [i, j], d b_i/dx^j as [i, j])."""
        b = self.a.numeric(x) + self.c * Ljet.dy
        db_dy = self.c * Ljet.dy2
        db_dx = self.a.jacobian() + self.c * np.swapaxes(Ljet.dx_dy, -1, -2)
        return b, db_dy, db_dx


def _alpha(field_: RiemannianField):
    return lambda x, y: dk.sqrt(field_.quadratic(x, y))


def _alpha_norm(field_: RiemannianField, w: AffineCovector, x) -> float:
    a = field_.numeric(x)
    v = w.numeric(x)
    return float(np.sqrt(v @ np.linalg.solve(a, v)))


def _as_tuple(v):
    if v is None:
        return None
    arr = np.asarray(v, dtype=float)
    return tuple(map(tuple, arr)) if arr.ndim == 2 else tuple(arr.tolist())


def _field_from(spec: dict, n: int) -> RiemannianField:
    kind = spec.get("field", "identity")
    return RiemannianField(kind=kind, n=n, matrix=_as_tuple(spec.get("matrix")),
                           gradient=_as_tuple(spec.get("gradient", (1.0,) + (0.0,) * (n - 1))))


def make_metric(spec: dict | str, probes: Sequence | None = None, **params) -> MetricFunction:
    """Build a zoo metric from a spec mapping (or a kind plus keyword params).

    Recognised keys: ``kind``, ``n``, ``field``/``matrix``/``gradient`` for
    the Riemannian part and ``oneform`` (with optional ``oneform_Q``) for the
    1-form of Randers, Kropina and Matsumoto metrics.  ``probes`` is an
    optional list of (x, y) pairs checked for L > 0 and det g > 1e-12.
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = {**spec, **params}
    kind = spec.get("kind")
    if kind not in METRIC_KINDS or kind == "hexp":
        raise ValueError(f"unknown metric kind {kind!r}; use hexp_apply for changed metrics")
    n = int(spec.get("n", 2))
    if n < 2:
        raise InadmissibleMetricError("dimension must be at least 2")
    if kind == "euclidean":
        field_ = RiemannianField("identity", n)
    else:
        field_ = _field_from(spec, n)
    origin = np.zeros(n)
    a0 = field_.numeric(origin)
    if np.any(np.linalg.eigvalsh(a0) <= 0):
        raise InadmissibleMetricError(f"Riemannian part not positive definite at x={origin.tolist()}")
    alpha = _alpha(field_)

    if kind in ("euclidean", "riemannian"):
        fn = alpha
    else:
        w = AffineCovector(_as_tuple(spec.get("oneform")), _as_tuple(spec.get("oneform_Q")))
        if w.n != n:
            raise ValueError("oneform must have n components")
        size = _alpha_norm(field_, w, origin)
        if kind == "randers":
            if size >= 1.0:
                raise InadmissibleMetricError(f"Randers 1-form norm {size:.3g} >= 1 at x={origin.tolist()}")
            fn = lambda x, y: alpha(x, y) + w.contract(x, y)
        elif kind == "kropina":
            if size == 0.0:
                raise InadmissibleMetricError("Kropina 1-form must be non-zero")
            fn = lambda x, y: field_.quadratic(x, y) / w.contract(x, y)
        else:
            if size >= 0.5:
                raise InadmissibleMetricError(f"Matsumoto 1-form norm {size:.3g} >= 1/2 at x={origin.tolist()}")
            fn = lambda x, y: field_.quadratic(x, y) / (alpha(x, y) - w.contract(x, y))
    metric = MetricFunction(kind=kind, n=n, fn=fn, params=dict(spec))
    for x, y in probes or ():
        _probe(metric, x, y)
    return metric


def _probe(metric: MetricFunction, x, y) -> None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    try:
        jet = dk.jet_eval(lambda xx, yy: 0.5 * metric(xx, yy) ** 2, x, y, order_y=2)
    except dk.EvaluationDomainError as err:
        raise InadmissibleMetricError(f"inadmissible metric at x={x.tolist()}, y={y.tolist()}") from err
    L = metric.evaluate(x, y)
    if not L > 0 or abs(np.linalg.det(jet.dy2)) <= DET_FLOOR:
        raise InadmissibleMetricError(f"inadmissible metric at x={x.tolist()}, y={y.tolist()}")


def make_hvector(family: str, base: MetricFunction | None = None, a=None, Q=None, c: float = 0.0) -> HVectorField:
    """Build one of the h-vector families on ``base``.

    constant: b = a; gradient: b = a + Q x (Q symmetric); homothety: b = c l;
    mixed: b = a + Q x + c l.  The scalar rho equals c.
    """
    if family not in HVECTOR_FAMILIES:
        raise ValueError(f"unknown h-vector family {family!r}")
    n = base.n if base is not None else (len(a) if a is not None else 2)
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    c = float(c)
    if a.shape != (n,):
        raise ValueError("covector must have n components")
    if family in ("constant", "homothety") and Q is not None and np.any(np.asarray(Q) != 0):
        raise ValueError(f"{family} family takes no x-dependence")
    if Q is not None:
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (n, n) or not np.allclose(Q, Q.T):
            raise ValueError("gradient part must be a symmetric n x n matrix")
    if family in ("constant", "gradient") and c != 0.0:
        raise ValueError(f"{family} family has rho = 0; use mixed for c != 0")
    if family == "homothety" and np.any(a != 0):
        raise ValueError("homothety family takes no covector part")
    if not np.all(np.isfinite(a)) or not np.isfinite(c):
        raise ValueError("h-vector parameters must be finite")
    return HVectorField(family=family, a=AffineCovector(tuple(a.tolist()), _as_tuple(Q)), c=c)


def hexp_apply(base: MetricFunction, b: HVectorField) -> MetricFunction:
    """The changed metric L exp(beta / L) with beta = b_i y^i."""
    if b.n != base.n:
        raise ValueError("h-vector and metric dimensions differ")

    def fn(x, y):
        L = base(x, y)
        tau = b.beta(x, y, L) / L
        if np.any(np.abs(dk.value_of(tau)) > TAU_MAX):
            raise ChangeOverflowError(f"|beta/L| exceeds {TAU_MAX}")
        return L * dk.exp(tau)

    return MetricFunction(kind="hexp", n=base.n, fn=fn, params={"base": base.kind, "family": b.family},
                          base=base, hvector=b)


@dataclass(frozen=True)
class ChartSpec:
    """Sampling box for x, unit-sphere directions for y, and a seed."""

    n: int = 2
    lo: tuple = (-0.5, -0.5)
    hi: tuple = (0.5, 0.5)
    seed: int = 42

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if len(self.lo) != self.n or len(self.hi) != self.n:
            raise ValueError("box corners must have n components")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("degenerate coordinate box")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=-1)


def _admissible(metric: MetricFunction, x, y) -> np.ndarray:
    with np.errstate(all="ignore"):
        try:
            jet = dk.jet_eval(lambda xx, yy: 0.5 * metric(xx, yy) ** 2, x, y, order_y=2)
        except dk.EvaluationDomainError:
            return np.array([_admissible(metric, x[i : i + 1], y[i : i + 1])[0] for i in range(len(x))], bool)
        L = metric.evaluate(x, y)
    return (L > 0) & (np.linalg.det(jet.dy2) > DET_FLOOR)


def sample_points(chart: ChartSpec, metrics: Sequence[MetricFunction], count: int,
                  accept: Callable | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` admissible (x, y) pairs, deterministic in ``chart.seed``.

    A pair is kept when every metric has L > 0 and det g > 1e-12 there and
    ``accept(x, y)`` (if given) returns True.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(chart.seed)
    lo, hi = np.asarray(chart.lo, float), np.asarray(chart.hi, float)
    xs, ys = [], []
    have = 0
    for _ in range(200):
        m = max(2 * (count - have), 8)
        x = lo + (hi - lo) * rng.random((m, chart.n))
        y = rng.standard_normal((m, chart.n))
        y /= np.linalg.norm(y, axis=1, keepdims=True)
        ok = np.ones(m, bool)
        for metric in metrics:
            ok &= _admissible(metric, x, y)
        if accept is not None and ok.any():
            ok[ok] &= np.asarray(accept(x[ok], y[ok]), bool)
        xs.append(x[ok])
        ys.append(y[ok])
        have += int(ok.sum())
        if have >= count:
            break
    else:
        raise InadmissibleMetricError("could not draw enough admissible samples in the chart")
    return np.concatenate(xs)[:count], np.concatenate(ys)[:count]


@dataclass
class HVectorReport:
    samples: int
    derivative_residual: float
    cartan_residual: float
    rho_residual: float
    tol: float

    @property
    def derivative_ok(self) -> bool:
        return self.derivative_residual < self.tol

    @property
    def cartan_ok(self) -> bool:
        return self.cartan_residual < self.tol

    @property
    def rho_ok(self) -> bool:
        return self.rho_residual < self.tol


def validate_hvector(base: MetricFunction, b: HVectorField, chart: ChartSpec, count: int = 64,
                     tol: float = 1e-10) -> HVectorReport:
    """Sampled residuals of the h-vector axioms.

    derivative: L db_i/dy^j - rho h_ij; cartan: L C^h_ij b_h - rho h_ij;
    rho: d rho/dy (zero, rho is stored as a constant).
    """
    from .fundamentals import base_tensors

    x, y = sample_points(chart, [base], count)
    t = base_tensors(base, x, y)
    bvec, db_dy, _ = b.jets(x, t.Ljet)
    L = t.L[..., None, None]
    r1 = L * db_dy - b.rho * t.h
    r2 = L * np.einsum("...hij,...h->...ij", t.Cup, bvec) - b.rho * t.h
    return HVectorReport(samples=len(x), derivative_residual=float(np.max(np.abs(r1))),
                         cartan_residual=float(np.max(np.abs(r2))), rho_residual=0.0, tol=tol)
