"""Projective factor, the projectivity condition and geodesic traces."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffkit as dk
from .closed_forms import ChangeScalars
from .difference import change_context, oracle_difference
from .fundamentals import BaseTensors, CovariantDerivs, spray_coefficients
from .metrics import ChartSpec, HVectorField, MetricFunction

__all__ = [
    "InsufficientTraceError",
    "GeodesicTrace",
    "ProjectivityVerdict",
    "projective_factor",
    "condition_residual",
    "is_projective",
    "geodesic_trace",
    "trace_compare",
    "export_trace",
    "read_trace",
]


class InsufficientTraceError(ValueError):
    pass


def projective_factor(D00, base: BaseTensors, covd: CovariantDerivs, cs: ChangeScalars) -> np.ndarray:
    """P with y_i D^i_00 = 2 P L^2, from the closed form of D^i_00.

    ``D00`` is accepted for symmetry with the caller's data but the value is
    rebuilt from the covariant derivatives; use ``D00 - 2 P y`` to measure how
    far the change is from projective.
    """
    y_l = np.einsum("...i,...i->...", base.y_low, base.l_up)
    L = base.L
    bracket = covd.E_00 - L / cs.etau / cs.divisor * (cs.etau / L * covd.beta_0 * cs.m2 + 2 * cs.etau * covd.F_beta0)
    return y_l / (2 * L**2) * bracket


def condition_residual(covd: CovariantDerivs, cs: ChangeScalars, base: BaseTensors) -> np.ndarray:
    """Per-sample max_i |F_i0 + beta_|0 m_i / (2L)|."""
    r = covd.F_i0 + covd.beta_0[..., None] * cs.m / (2 * base.L[..., None])
    return np.max(np.abs(r), axis=-1)


@dataclass
class ProjectivityVerdict:
    """Spray test (A) and covariant condition (B), per sample."""

    spray_orthogonal: np.ndarray
    condition: np.ndarray
    tol: float
    factor: np.ndarray = field(repr=False)

    @property
    def a_pass(self) -> np.ndarray:
        return self.spray_orthogonal < self.tol

    @property
    def b_pass(self) -> np.ndarray:
        return self.condition < self.tol

    @property
    def projective(self) -> bool:
        return bool(np.all(self.a_pass))

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.a_pass == self.b_pass))

    @property
    def disagreements(self) -> int:
        return int(np.sum(self.a_pass != self.b_pass))


def is_projective(metric: MetricFunction, hvector: HVectorField, x, y, tol: float = 1e-7) -> ProjectivityVerdict:
    """Decide projectivity two ways on a batch of samples.

    A: the component of 2(*G - G) (oracle sprays) orthogonal to y in the base
    metric; B: the covariant condition on F_i0.
    """
    ctx = change_context(metric, hvector, x, y)
    D00 = 2.0 * oracle_difference(ctx).dG
    y_arr, y_low = ctx.base.y, ctx.base.y_low
    along = np.einsum("...i,...i->...", y_low, D00) / np.einsum("...i,...i->...", y_low, y_arr)
    orth = D00 - along[..., None] * y_arr
    return ProjectivityVerdict(
        spray_orthogonal=np.max(np.abs(orth), axis=-1),
        condition=condition_residual(ctx.covd, ctx.cs, ctx.base),
        tol=tol,
        factor=projective_factor(D00, ctx.base, ctx.covd, ctx.cs),
    )


@dataclass
class GeodesicTrace:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    method: str = "rk4"
    order: int = 4
    reason: str = "t_end"
    energy_drift: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def arc_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.x, axis=0), axis=1)))


def geodesic_trace(metric: MetricFunction, x0, y0, t_end: float, step: float = 1e-3,
                   chart: ChartSpec | None = None) -> GeodesicTrace:
    """Integrate x'' + 2 G(x, x') = 0 with classical RK4 from unit-speed data."""
    x = np.asarray(x0, dtype=float)
    v = np.asarray(y0, dtype=float)
    speed = float(metric.evaluate(x, v))
    if not speed > 0:
        raise ValueError("initial data not admissible: L(x0, y0) <= 0")
    v = v / speed
    nsteps = int(round(t_end / step))
    ts, xs, vs = [0.0], [x], [v]
    reason = "t_end"

    def rhs(xx, vv):
        return vv, -2.0 * spray_coefficients(metric, xx, vv)

    for k in range(nsteps):
        try:
            k1x, k1v = rhs(x, v)
            k2x, k2v = rhs(x + 0.5 * step * k1x, v + 0.5 * step * k1v)
            k3x, k3v = rhs(x + 0.5 * step * k2x, v + 0.5 * step * k2v)
            k4x, k4v = rhs(x + step * k3x, v + step * k3v)
        except (dk.EvaluationDomainError, np.linalg.LinAlgError):
            reason = "chart-exit"
            break
        x = x + step / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + step / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if (chart is not None and not chart.contains(x)) or not np.all(np.isfinite(x)):
            reason = "chart-exit"
            break
        ts.append((k + 1) * step)
        xs.append(x)
        vs.append(v)
    X, V = np.array(xs), np.array(vs)
    drift = float(np.max(np.abs(metric.evaluate(X, V) - 1.0)))
    return GeodesicTrace(t=np.array(ts), x=X, v=V, step=step, reason=reason, energy_drift=drift)


def _point_polyline_distance(points: np.ndarray, path: np.ndarray, chunk: int = 512) -> np.ndarray:
    a, b = path[:-1], path[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s : s + chunk, None, :]
        u = np.clip(np.einsum("pij,ij->pi", p - a, ab) / denom, 0.0, 1.0)
        nearest = a + u[..., None] * ab
        out[s : s + chunk] = np.min(np.linalg.norm(p - nearest, axis=-1), axis=1)
    return out


def trace_compare(t1: GeodesicTrace, t2: GeodesicTrace) -> float:
    """Largest distance from the points of one trace to the path of the other.

    The points are taken from the trace that covers the shorter coordinate
    arc, so unit-speed traces of different metrics can be compared as point
    sets regardless of parametrization.
    """
    if len(t1) < 2 or len(t2) < 2:
        raise InsufficientTraceError("insufficient-trace: need at least two states per trace")
    short, long_ = (t1, t2) if t1.arc_length <= t2.arc_length else (t2, t1)
    return float(np.max(_point_polyline_distance(short.x, long_.x)))


def export_trace(trace: GeodesicTrace, path: str | Path) -> Path:
    """One line per state: t, x^1..x^n, y^1..y^n."""
    path = Path(path)
    data = np.column_stack([trace.t, trace.x, trace.v])
    np.savetxt(path, data, fmt="%.17g")
    return path


def read_trace(path: str | Path) -> GeodesicTrace:
    data = np.atleast_2d(np.loadtxt(path))
    n = (data.shape[1] - 1) // 2
    step = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
    return GeodesicTrace(t=data[:, 0], x=data[:, 1 : 1 + n], v=data[:, 1 + n :], step=step)
