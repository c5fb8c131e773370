"""Difference tensor D^i_jk = *F^i_jk - F^i_jk of the two Cartan connections.

D is rebuilt in three steps (D^i_00, then D^i_0j, then D^i_jk), each one an
application of :func:`solve_special` to the pair of linear conditions

    *L_ir A^r = B_i,    *L_r A^r = B,

whose right-hand sides come from h-covariant differentiation of the changed
first and second y-derivatives.  The oracle route computes *F directly from
jets of the changed metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fundamentals as fu
from .closed_forms import ChangeScalars, StarredTensors, change_scalars, starred_tensors
from .metrics import HVectorField, MetricFunction, hexp_apply

__all__ = [
    "ChangeContext",
    "DifferenceTensor",
    "OracleDifference",
    "ParallelVerdict",
    "change_context",
    "solve_special",
    "d00",
    "d0j",
    "djk",
    "difference_tensor",
    "oracle_difference",
    "defining_residuals",
    "parallel_check",
    "berwald_diff",
    "printed_form_witnesses",
]


@dataclass
class ChangeContext:
    """Everything evaluated once for a (metric, h-vector, x, y) batch."""

    metric: MetricFunction
    hvector: HVectorField
    changed: MetricFunction
    base: fu.BaseTensors
    conn: fu.ConnectionBundle
    covd: fu.CovariantDerivs
    cs: ChangeScalars
    star: StarredTensors

    @property
    def R(self) -> np.ndarray:
        """h-derivative of the changed first y-derivative, as [i, j]."""
        return _first_rhs(self.covd, self.cs, self.base)

    @property
    def S(self) -> np.ndarray:
        """h-derivative of the changed second y-derivative, as [i, j, k]."""
        return _second_rhs(self.covd, self.cs, self.base)


def change_context(metric: MetricFunction, hvector: HVectorField, x, y) -> ChangeContext:
    base = fu.base_tensors(metric, x, y)
    conn = fu.spray_connections(metric, x, y, base)
    covd = fu.h_cov_deriv_b(metric, hvector, conn, base)
    cs = change_scalars(base, covd.b, hvector.rho)
    return ChangeContext(metric=metric, hvector=hvector, changed=hexp_apply(metric, hvector), base=base,
                         conn=conn, covd=covd, cs=cs, star=starred_tensors(base, cs))


@dataclass
class DifferenceTensor:
    D00: np.ndarray
    D0j: np.ndarray
    Djk: np.ndarray
    G_ij: np.ndarray
    G_j: np.ndarray
    H_ik: np.ndarray
    H_jik: np.ndarray
    mD00: np.ndarray


def _s(v, k):
    return v.reshape(v.shape + (1,) * k)


def _first_rhs(covd, cs, base):
    # e^tau (beta_|j m_i / L + b_i|j)
    return _s(cs.etau, 2) * (
        cs.m[..., :, None] * covd.beta_j[..., None, :] / _s(base.L, 2) + covd.bij
    )


def _second_rhs(covd, cs, base, complete: bool = True):
    L = _s(base.L, 3)
    tau_k = covd.beta_j / base.L[..., None]
    m, l = cs.m, base.l
    Lij = base.Lij
    out = (
        _s(cs.nu - 1.0, 3) * np.einsum("...ij,...k->...ijk", Lij, tau_k)
        + np.einsum("...i,...j,...k->...ijk", m, m, tau_k) / L
        + np.einsum("...ij,...k->...ijk", Lij, covd.rho_k)
    )
    if complete:
        # h-derivative of m_i m_j / L, with m_i|k = b_i|k - tau_|k l_i
        out = out + (
            np.einsum("...ik,...j->...ijk", covd.bij, m)
            + np.einsum("...i,...jk->...ijk", m, covd.bij)
            - np.einsum("...i,...j,...k->...ijk", l, m, tau_k)
            - np.einsum("...i,...j,...k->...ijk", m, l, tau_k)
        ) / L
    return _s(cs.etau, 3) * out


def solve_special(B_i, B, cs: ChangeScalars, base: fu.BaseTensors) -> np.ndarray:
    """Unique A^r with *L_ir A^r = B_i and *L_r A^r = B.

    ``B_i`` has shape batch + (n,) + extra and ``B`` batch + extra; the
    result has the shape of ``B_i`` with the first non-batch axis being r.
    """
    B_i = np.asarray(B_i, dtype=float)
    B = np.asarray(B, dtype=float)
    nb = cs.tau.ndim
    n = base.y.shape[-1]
    Bi = B_i.reshape(B_i.shape[:nb] + (n, -1))
    Bs = B.reshape(B.shape[:nb] + (-1,))
    B_up = base.ginv @ Bi
    B_beta = np.einsum("...i,...ip->...p", cs.b_up, Bi)
    L, et, nu, d = (_s(v, 1) for v in (base.L, cs.etau, cs.nu, cs.divisor))
    A = (
        (L / (nu * et))[..., None, :] * B_up
        + base.l_up[..., :, None] * (Bs / et - L * B_beta / (et * d))[..., None, :]
        - cs.m_up[..., :, None] * (L * B_beta / (nu * et * d))[..., None, :]
    )
    return A.reshape(B_i.shape)


def d00(covd: fu.CovariantDerivs, cs: ChangeScalars, base: fu.BaseTensors) -> np.ndarray:
    """D^i_00 = 2(*G^i - G^i) in closed form."""
    L, et, nu, d = base.L, cs.etau, cs.nu, cs.divisor
    F_up0 = np.einsum("...ij,...j->...i", base.ginv, covd.F_i0)
    bracket = et / L * covd.beta_0 * cs.m2 + 2 * et * covd.F_beta0
    return (
        _s(L / (nu * et), 1) * (_s(et / L * covd.beta_0, 1) * cs.m_up + 2 * _s(et, 1) * F_up0)
        + base.l_up * _s(covd.E_00 - L / et / d * bracket, 1)
        - cs.m_up * _s(L / (nu * et * d) * bracket, 1)
    )


def d0j(D00, covd, cs, base, star: StarredTensors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """D^i_0j (as [i, j]) with the right-hand sides G_ij and G_j."""
    R = _first_rhs(covd, cs, base)
    S0 = np.einsum("...ijk,...k->...ij", _second_rhs(covd, cs, base), base.y)
    G_ij = 0.5 * (S0 - np.einsum("...ijr,...r->...ij", star.Lijk, D00) + R - np.swapaxes(R, -1, -2))
    G_j = _s(cs.etau, 1) * (covd.E_i0 - covd.F_i0)
    return solve_special(G_ij, G_j, cs, base), G_ij, G_j


def djk(D0j, covd, cs, base, star: StarredTensors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """D^i_jk (as [i, j, k]) with the right-hand sides H_ik and H_jik."""
    R = _first_rhs(covd, cs, base)
    P = np.einsum("...ir,...rk->...ik", star.Lij, D0j)
    H_ik = 0.5 * (R + np.swapaxes(R, -1, -2) - P - np.swapaxes(P, -1, -2))
    U = _second_rhs(covd, cs, base) - np.einsum("...ijr,...rk->...ijk", star.Lijk, D0j)
    # Christoffel combination: H_jik = (U_ijk + U_jki - U_kij) / 2
    H_jik = 0.5 * (
        np.einsum("...bac->...abc", U) + np.einsum("...acb->...abc", U) - np.einsum("...cba->...abc", U)
    )
    return solve_special(H_jik, H_ik, cs, base), H_ik, H_jik


def difference_tensor(ctx: ChangeContext) -> DifferenceTensor:
    """Three-step closed-form reconstruction of D."""
    covd, cs, base, star = ctx.covd, ctx.cs, ctx.base, ctx.star
    D00 = d00(covd, cs, base)
    D0j, G_ij, G_j = d0j(D00, covd, cs, base, star)
    Djk, H_ik, H_jik = djk(D0j, covd, cs, base, star)
    mD00 = (covd.beta_0 * cs.m2 + 2 * base.L * covd.F_beta0) / cs.divisor
    return DifferenceTensor(D00=D00, D0j=D0j, Djk=Djk, G_ij=G_ij, G_j=G_j, H_ik=H_ik, H_jik=H_jik, mD00=mD00)


@dataclass
class OracleDifference:
    """Connection differences computed from jets of the changed metric."""

    dF: np.ndarray
    dN: np.ndarray
    dG: np.ndarray
    star_conn: fu.ConnectionBundle = field(repr=False)
    star_base: fu.BaseTensors = field(repr=False, default=None)


def oracle_difference(ctx: ChangeContext) -> OracleDifference:
    star_base = fu.base_tensors(ctx.changed, ctx.base.x, ctx.base.y)
    sc = fu.spray_connections(ctx.changed, ctx.base.x, ctx.base.y, star_base)
    return OracleDifference(dF=sc.F - ctx.conn.F, dN=sc.N - ctx.conn.N, dG=sc.G - ctx.conn.G, star_conn=sc,
                           star_base=star_base)


def defining_residuals(Djk: np.ndarray, ctx: ChangeContext) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the two linear conditions that determine D.

    first[i, j]:     *L_ir D^r_0j + *L_r D^r_ij - R_ij
    second[i, j, k]: *L_ijr D^r_0k + *L_rj D^r_ik + *L_ir D^r_jk - S_ijk
    """
    star = ctx.star
    D0 = np.einsum("...rkj,...k->...rj", Djk, ctx.base.y)
    first = np.einsum("...ir,...rj->...ij", star.Lij, D0) + np.einsum("...r,...rij->...ij", star.Li, Djk) - ctx.R
    second = (
        np.einsum("...ijr,...rk->...ijk", star.Lijk, D0)
        + np.einsum("...rj,...rik->...ijk", star.Lij, Djk)
        + np.einsum("...ir,...rjk->...ijk", star.Lij, Djk)
        - ctx.S
    )
    return first, second


@dataclass
class ParallelVerdict:
    samples: int
    max_bij: float
    max_D: float
    tol: float

    @property
    def parallel(self) -> bool:
        return self.max_bij < self.tol

    @property
    def vanishing(self) -> bool:
        return self.max_D < self.tol

    @property
    def forward_ok(self) -> bool:
        """parallel b implies D = 0."""
        return self.vanishing or not self.parallel

    @property
    def converse_ok(self) -> bool:
        """D = 0 implies parallel b."""
        return self.parallel or not self.vanishing

    @property
    def consistent(self) -> bool:
        return self.forward_ok and self.converse_ok


def parallel_check(metric: MetricFunction, hvector: HVectorField, x, y, tol: float = 1e-9) -> ParallelVerdict:
    """Sampled test of: connections coincide iff b is h-parallel."""
    ctx = change_context(metric, hvector, x, y)
    D = oracle_difference(ctx).dF
    return ParallelVerdict(samples=len(np.atleast_2d(ctx.base.y)), max_bij=float(np.max(np.abs(ctx.covd.bij))),
                           max_D=float(np.max(np.abs(D))), tol=tol)


def berwald_diff(metric: MetricFunction, hvector: HVectorField, x, y, step: float = 1e-5):
    """(*G^i_kh - G^i_kh, dD^i_0k/dy^h), both as [..., i, k, h].

    The first comes from central differences of the exact nonlinear
    connections, the second from central differences of the closed-form D^i_0k.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    lhs, rhs = [], []
    for h in range(n):
        e = np.zeros(n)
        e[h] = step
        plus = change_context(metric, hvector, x, y + e)
        minus = change_context(metric, hvector, x, y - e)
        lhs.append((oracle_difference(plus).dN - oracle_difference(minus).dN) / (2 * step))
        rhs.append((difference_tensor(plus).D0j - difference_tensor(minus).D0j) / (2 * step))
    return np.stack(lhs, axis=-1), np.stack(rhs, axis=-1)


def _printed_G_ij(ctx: ChangeContext, D00):
    covd, cs, base, star = ctx.covd, ctx.cs, ctx.base, ctx.star
    L, et, nu, m = base.L, cs.etau, cs.nu, cs.m
    s2 = lambda v: _s(v, 2)
    Lij = base.Lij
    mD = np.einsum("...r,...r->...", m, D00)
    cyc = (
        s2(nu - 1) * (s2(mD) * Lij + np.einsum("...i,...jr,...r->...ij", m, Lij, D00)
                      + np.einsum("...j,...ri,...r->...ij", m, Lij, D00))
        - 3 * s2(mD / L) * np.einsum("...i,...j->...ij", m, m)
    )
    mm = np.einsum("...i,...j->...ij", m, m)
    two_G = (
        s2(et / L) * (m[..., :, None] * covd.beta_j[..., None, :] - covd.beta_j[..., :, None] * m[..., None, :])
        - s2(et * nu) * np.einsum("...ijr,...r->...ij", base.Lijk, D00)
        - s2(et / L) * cyc
        + 2 * s2(et) * covd.Fskew
        - s2(et / L**2 * mD) * mm
        + s2((nu - 1) / L * et * covd.beta_0) * Lij
        + s2(et / L**2 * covd.beta_0) * mm
    )
    return 0.5 * two_G


def printed_form_witnesses(ctx: ChangeContext, sample: int | None = None) -> list[dict]:
    """Evaluate three literal transcriptions that disagree with the oracle.

    Each record carries the literal and the corrected residual at one sample
    so a reader can reproduce the discrepancy.  By default the sample with
    the largest literal residual is used.
    """
    D = oracle_difference(ctx).dF
    y = ctx.base.y
    D0 = np.einsum("...rkj,...k->...rj", D, y)
    D00 = np.einsum("...rj,...j->...r", D0, y)
    star, cs, covd, base = ctx.star, ctx.cs, ctx.covd, ctx.base
    if y.ndim != 2:
        raise ValueError("witnesses need a batch of samples, y of shape (count, n)")

    def worst(literal):
        if sample is not None:
            return sample
        return int(np.argmax(np.max(np.abs(literal).reshape(len(literal), -1), axis=1)))

    def witness(literal, corrected):
        k = worst(literal)
        return {"x": base.x[k].tolist(), "y": y[k].tolist(), "sample": k,
                "literal_residual": float(np.max(np.abs(literal[k]))),
                "corrected_residual": float(np.max(np.abs(corrected[k])))}

    lhs2 = (
        np.einsum("...ijr,...rk->...ijk", star.Lijk, D0)
        + np.einsum("...rj,...rik->...ijk", star.Lij, D)
        + np.einsum("...ir,...rjk->...ijk", star.Lij, D)
    )
    literal_S = _second_rhs(covd, cs, base, complete=False)

    R = ctx.R
    P = np.einsum("...ir,...rk->...ik", star.Lij, D0)
    literal_H = 0.5 * (
        _s(cs.etau / base.L, 2) * (cs.m[..., :, None] * covd.beta_j[..., None, :]
                                  + covd.beta_j[..., :, None] * cs.m[..., None, :])
        + _s(cs.etau, 2) * covd.Esym - P - np.swapaxes(P, -1, -2)
    )
    target_H = np.einsum("...r,...rik->...ik", star.Li, D)
    corrected_H = 0.5 * (R + np.swapaxes(R, -1, -2) - P - np.swapaxes(P, -1, -2))

    target_G = np.einsum("...ir,...rj->...ij", star.Lij, D0)
    corrected_G = 0.5 * (np.einsum("...ijk,...k->...ij", ctx.S, y)
                         - np.einsum("...ijr,...r->...ij", star.Lijk, D00) + R - np.swapaxes(R, -1, -2))
    return [
        {
            "formula": "second-derivative-transport",
            "issue": "right-hand side omits the h-derivative of m_i m_j / L, "
                     "i.e. e^tau (b_i|k m_j + m_i b_j|k - tau_|k (l_i m_j + m_i l_j)) / L",
            "correction": "include the omitted group; it propagates into G_ij and H_jik",
            "witness": witness(lhs2 - literal_S, lhs2 - ctx.S),
        },
        {
            "formula": "H_ik",
            "issue": "symmetric part carries e^tau E_ik where 2 e^tau E_ik is required",
            "correction": "2 H_ik = R_ik + R_ki - *L_ir D^r_0k - *L_kr D^r_0i",
            "witness": witness(literal_H - target_H, corrected_H - target_H),
        },
        {
            "formula": "G_ij",
            "issue": "cyclic sum contains m_i m_j m_r / L instead of m_i m_j l_r / L, B_0 read as beta_|0, "
                     "and the omitted transport group is missing",
            "correction": "2 G_ij = S_ij0 - *L_ijr D^r_00 + R_ij - R_ji",
            "witness": witness(_printed_G_ij(ctx, D00) - target_G, corrected_G - target_G),
        },
    ]
