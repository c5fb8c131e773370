"""Closed forms for the tensors of the h-exponential change L exp(beta/L).

Every index is raised with the base metric g^ij.  The results are meant to be
compared with :func:`fundamentals.base_tensors` applied to the changed metric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fundamentals import BaseTensors

__all__ = [
    "ChangeSingularityError",
    "ShermanMorrisonSingularityError",
    "ChangeScalars",
    "StarredTensors",
    "change_scalars",
    "star_l_derivs",
    "star_metric",
    "star_cartan",
    "invert_rank_one",
    "star_inverse_metric",
    "star_inverse_metric_by_lemma",
    "star_cartan_mixed",
    "starred_tensors",
]

REGULARITY_FLOOR = 1e-10


class ChangeSingularityError(ValueError):
    pass


class ShermanMorrisonSingularityError(ZeroDivisionError):
    pass


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _sym3(m, h):
    """m_i h_jk + m_j h_ki + m_k h_ij."""
    return (
        np.einsum("...i,...jk->...ijk", m, h)
        + np.einsum("...j,...ki->...ijk", m, h)
        + np.einsum("...k,...ij->...ijk", m, h)
    )


@dataclass
class ChangeScalars:
    beta: np.ndarray
    tau: np.ndarray
    rho: float
    nu: np.ndarray
    b: np.ndarray
    b_up: np.ndarray
    b2: np.ndarray
    m: np.ndarray
    m_up: np.ndarray
    m2: np.ndarray
    etau: np.ndarray
    e2tau: np.ndarray

    @property
    def divisor(self) -> np.ndarray:
        """m^2 + nu."""
        return self.m2 + self.nu


def change_scalars(base: BaseTensors, b: np.ndarray, rho: float) -> ChangeScalars:
    b = np.asarray(b, dtype=float)
    beta = np.einsum("...i,...i->...", b, base.y)
    tau = beta / base.L
    nu = 1.0 + rho - tau
    m = b - tau[..., None] * base.l
    m_up = np.einsum("...ij,...j->...i", base.ginv, m)
    b_up = np.einsum("...ij,...j->...i", base.ginv, b)
    m2 = np.einsum("...i,...i->...", m, m_up)
    if np.any(np.abs(nu) < REGULARITY_FLOOR) or np.any(np.abs(m2 + nu) < REGULARITY_FLOOR):
        raise ChangeSingularityError("change-singularity: |nu| or |m^2 + nu| below 1e-10")
    return ChangeScalars(beta=beta, tau=tau, rho=float(rho), nu=nu, b=b, b_up=b_up,
                         b2=np.einsum("...i,...i->...", b, b_up), m=m, m_up=m_up, m2=m2,
                         etau=np.exp(tau), e2tau=np.exp(2.0 * tau))


def star_l_derivs(base: BaseTensors, cs: ChangeScalars):
    """First three y-derivatives of the changed metric and its supporting element."""
    L, m, l = base.L, cs.m, base.l
    et = cs.etau
    Li = et[..., None] * (m + l)
    Lij = (et * cs.nu)[..., None, None] * base.Lij + (et / L)[..., None, None] * _outer(m, m)
    mmm = np.einsum("...i,...j,...k->...ijk", m, m, m)
    mml = (
        np.einsum("...j,...k,...i->...ijk", m, m, l)
        + np.einsum("...i,...k,...j->...ijk", m, m, l)
        + np.einsum("...i,...j,...k->...ijk", m, m, l)
    )
    e3 = lambda s: s[..., None, None, None]
    Lijk = (
        e3(et * cs.nu) * base.Lijk
        + e3((cs.rho - cs.tau) * et / L) * _sym3(m, base.Lij)
        - e3(et / L**2) * (mml - mmm)
    )
    return Li, Lij, Lijk, Li.copy()


def star_metric(base: BaseTensors, cs: ChangeScalars) -> np.ndarray:
    l, b, tau = base.l, cs.b, cs.tau
    e2 = cs.e2tau[..., None, None]
    s = lambda v: v[..., None, None]
    return e2 * (
        s(cs.nu) * base.g
        + s(2 * tau**2 - tau - cs.rho) * _outer(l, l)
        + s(1 - 2 * tau) * (_outer(b, l) + _outer(l, b))
        + 2.0 * _outer(b, b)
    )


def star_cartan(base: BaseTensors, cs: ChangeScalars) -> np.ndarray:
    L, m = base.L, cs.m
    e3 = lambda v: v[..., None, None, None]
    return e3(cs.e2tau) * (
        e3(cs.nu) * base.C
        + e3(2.0 / L) * np.einsum("...i,...j,...k->...ijk", m, m, m)
        + e3((2 * cs.nu - 1) / (2 * L)) * _sym3(m, base.h)
    )


def _rank_one_update(m_inv, n_i):
    n_up = np.einsum("...ki,...i->...k", m_inv, n_i)
    q = 1.0 + np.einsum("...k,...k->...", n_i, n_up)
    if np.any(np.abs(q) < 1e-14):
        raise ShermanMorrisonSingularityError("sherman-morrison-singularity: 1 + n_k n^k vanishes")
    return m_inv - n_up[..., :, None] * n_up[..., None, :] / q[..., None, None], q


def invert_rank_one(m_ij: np.ndarray, n_i: np.ndarray):
    """Inverse and determinant of m_ij + n_i n_j from the inverse of m_ij.

    Works for complex ``n_i`` as well (a negative rank-one term is n = i|n|).
    """
    m_ij = np.asarray(m_ij)
    l_inv, q = _rank_one_update(np.linalg.inv(m_ij), np.asarray(n_i))
    return l_inv, q * np.linalg.det(m_ij)


def star_inverse_metric(base: BaseTensors, cs: ChangeScalars) -> np.ndarray:
    tau, nu, m2, rho = cs.tau, cs.nu, cs.m2, cs.rho
    b, l = cs.b_up, base.l_up
    d = m2 + nu
    s = lambda v: v[..., None, None]
    inner = (
        base.ginv
        - s(1.0 / d) * _outer(b, b)
        + s((tau - nu) / d) * (_outer(b, l) + _outer(l, b))
        - s((tau - nu) / d * (m2 + tau) - rho) * _outer(l, l)
    )
    return s(np.exp(-2 * tau) / nu) * inner


def star_inverse_metric_by_lemma(base: BaseTensors, cs: ChangeScalars) -> np.ndarray:
    """The same inverse via two rank-one inversions.

    exp(-2 tau) *g = nu g + 2 u u + (1/2 - nu) l l with u = m + l/2.
    """
    u = (cs.m + 0.5 * base.l).astype(complex)
    n2 = np.sqrt((0.5 - cs.nu).astype(complex))[..., None] * base.l
    inv0 = (base.ginv / cs.nu[..., None, None]).astype(complex)
    inv1, _ = _rank_one_update(inv0, np.sqrt(2.0) * u)
    inv2, _ = _rank_one_update(inv1, n2)
    return np.real(inv2) * np.exp(-2 * cs.tau)[..., None, None]


def star_cartan_mixed(base: BaseTensors, cs: ChangeScalars) -> np.ndarray:
    """*C^h_ij as [..., h, i, j]."""
    L, nu, m, m2 = base.L, cs.nu, cs.m, cs.m2
    d = m2 + nu
    q = -cs.b_up + ((2 * cs.tau - cs.rho - 1)[..., None]) * base.l_up
    Cb = np.einsum("...ijk,...k->...ij", base.C, cs.b_up)
    mm = _outer(m, m)
    h_mixed = np.einsum("...hk,...kj->...hj", base.ginv, base.h)
    e = lambda v: v[..., None, None, None]
    hq = lambda a: np.einsum("...h,...ij->...hij", q, a)
    term_sym = (
        np.einsum("...i,...hj->...hij", m, h_mixed)
        + np.einsum("...j,...hi->...hij", m, h_mixed)
        + np.einsum("...h,...ij->...hij", cs.m_up, base.h)
    )
    return (
        base.Cup
        + e(1 / d) * hq(Cb)
        + e(2 / (nu * L)) * (np.einsum("...h,...ij->...hij", cs.m_up, mm) + e(m2 / d) * hq(mm))
        + e((2 * nu - 1) / (2 * nu * L))
        * (term_sym + e(1 / d) * hq(2 * mm + m2[..., None, None] * base.h))
    )


@dataclass
class StarredTensors:
    L: np.ndarray
    Li: np.ndarray
    Lij: np.ndarray
    Lijk: np.ndarray
    li: np.ndarray
    g: np.ndarray
    C: np.ndarray
    ginv: np.ndarray
    Cup: np.ndarray


def starred_tensors(base: BaseTensors, cs: ChangeScalars) -> StarredTensors:
    Li, Lij, Lijk, li = star_l_derivs(base, cs)
    return StarredTensors(L=base.L * cs.etau, Li=Li, Lij=Lij, Lijk=Lijk, li=li, g=star_metric(base, cs),
                          C=star_cartan(base, cs), ginv=star_inverse_metric(base, cs),
                          Cup=star_cartan_mixed(base, cs))
