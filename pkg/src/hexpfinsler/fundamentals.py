"""Fundamental tensors, spray and Cartan connection of any metric function.

All quantities are computed from exact jets of L and of E = L^2/2, so the
same code yields the base quantities (applied to L) and the oracle starred
quantities (applied to the changed metric).  Arrays carry arbitrary leading
batch axes; index order follows the usual notation, e.g. ``F[..., i, j, k]``
is F^i_jk and ``N[..., i, j]`` is N^i_j.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffkit as dk

__all__ = [
    "DegenerateMetricError",
    "BaseTensors",
    "ConnectionBundle",
    "CovariantDerivs",
    "base_tensors",
    "spray_connections",
    "spray_coefficients",
    "berwald_coefficients",
    "h_cov_deriv_b",
    "v_cov_deriv",
    "metricity_residual",
    "supporting_element_residual",
]

DET_FLOOR = 1e-12


class DegenerateMetricError(ValueError):
    pass


@dataclass
class BaseTensors:
    x: np.ndarray
    y: np.ndarray
    L: np.ndarray
    l: np.ndarray
    Lij: np.ndarray
    Lijk: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    h: np.ndarray
    C: np.ndarray
    Cup: np.ndarray
    detg: np.ndarray
    Ljet: dk.Jet
    Ejet: dk.Jet

    @property
    def l_up(self) -> np.ndarray:
        return self.y / self.L[..., None]

    @property
    def y_low(self) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.g, self.y)


@dataclass
class ConnectionBundle:
    G: np.ndarray
    N: np.ndarray
    F: np.ndarray


@dataclass
class CovariantDerivs:
    b: np.ndarray
    db_dy: np.ndarray
    bij: np.ndarray  # b_i|j
    Esym: np.ndarray
    Fskew: np.ndarray
    beta_j: np.ndarray
    beta_0: np.ndarray
    E_i0: np.ndarray
    F_i0: np.ndarray
    F_beta0: np.ndarray
    E_00: np.ndarray
    rho_k: np.ndarray


def _energy(metric):
    def E(x, y):
        v = metric(x, y)
        return 0.5 * v * v

    return E


def base_tensors(metric, x, y) -> BaseTensors:
    """Supporting element, metric, angular metric and Cartan tensors at (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    Ljet = dk.jet_eval(metric, x, y, order_y=3, with_x=True)
    Ejet = dk.jet_eval(_energy(metric), x, y, order_y=3, with_x=True)
    g = Ejet.dy2
    detg = np.linalg.det(g)
    if np.any(np.abs(detg) < DET_FLOOR):
        raise DegenerateMetricError(f"degenerate metric: min |det g| = {np.min(np.abs(detg)):.3g}")
    ginv = np.linalg.inv(g)
    l = Ljet.dy
    h = g - l[..., :, None] * l[..., None, :]
    C = 0.5 * Ejet.dy3
    Cup = np.einsum("...ir,...rjk->...ijk", ginv, C)
    return BaseTensors(x=x, y=y, L=Ljet.value, l=l, Lij=Ljet.dy2, Lijk=Ljet.dy3, g=g, ginv=ginv, h=h,
                       C=C, Cup=Cup, detg=detg, Ljet=Ljet, Ejet=Ejet)


def spray_connections(metric, x, y, tensors: BaseTensors | None = None) -> ConnectionBundle:
    """Spray G^i, nonlinear connection N^i_j and Cartan coefficients F^i_jk."""
    t = tensors if tensors is not None else base_tensors(metric, x, y)
    J = t.Ejet
    y = t.y
    ginv = t.ginv
    Exy, Exyy = J.dx_dy, J.dx_dy2
    W = np.einsum("...k,...kl->...l", y, Exy) - J.dx
    G = 0.5 * np.einsum("...il,...l->...i", ginv, W)
    dW = np.swapaxes(Exy, -1, -2) + np.einsum("...k,...klj->...lj", y, Exyy) - Exy
    dginv = -2.0 * np.einsum("...ia,...abj,...bl->...ilj", ginv, t.C, ginv)
    N = 0.5 * (np.einsum("...ilj,...l->...ij", dginv, W) + np.einsum("...il,...lj->...ij", ginv, dW))
    # delta_j g_rk with delta_j = d/dx^j - N^s_j d/dy^s
    dg = Exyy - 2.0 * np.einsum("...sj,...rks->...jrk", N, t.C)
    F = 0.5 * np.einsum(
        "...ir,...jrk->...ijk",
        ginv,
        dg + np.einsum("...kjr->...jrk", dg) - np.einsum("...rjk->...jrk", dg),
    )
    return ConnectionBundle(G=G, N=N, F=F)


def spray_coefficients(metric, x, y) -> np.ndarray:
    """G^i alone, from a second-order jet of E (cheaper than the full bundle)."""
    J = dk.jet_eval(_energy(metric), x, y, order_y=2, with_x=True)
    W = np.einsum("...k,...kl->...l", np.asarray(y, dtype=float), J.dx_dy) - J.dx
    return 0.5 * np.linalg.solve(J.dy2, W[..., None])[..., 0]


def berwald_coefficients(metric, x, y, step: float = 1e-5) -> np.ndarray:
    """G^i_jk = dN^i_j/dy^k by central differences of the exact N."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        Np = spray_connections(metric, x, y + e).N
        Nm = spray_connections(metric, x, y - e).N
        cols.append((Np - Nm) / (2 * step))
    return np.stack(cols, axis=-1)


def h_cov_deriv_b(metric, b, conn: ConnectionBundle, tensors: BaseTensors) -> CovariantDerivs:
    """h-covariant derivative b_i|j and its derived contractions."""
    t = tensors
    bvec, db_dy, db_dx = b.jets(t.x, t.Ljet)
    bij = db_dx - np.einsum("...rj,...ir->...ij", conn.N, db_dy) - np.einsum("...r,...rij->...ij", bvec, conn.F)
    Esym = 0.5 * (bij + np.swapaxes(bij, -1, -2))
    Fskew = 0.5 * (bij - np.swapaxes(bij, -1, -2))
    y = t.y
    beta_j = np.einsum("...i,...ij->...j", y, bij)
    E_i0 = np.einsum("...ij,...j->...i", Esym, y)
    F_i0 = np.einsum("...ij,...j->...i", Fskew, y)
    b_up = np.einsum("...ij,...j->...i", t.ginv, bvec)
    return CovariantDerivs(
        b=bvec,
        db_dy=db_dy,
        bij=bij,
        Esym=Esym,
        Fskew=Fskew,
        beta_j=beta_j,
        beta_0=np.einsum("...j,...j->...", beta_j, y),
        E_i0=E_i0,
        F_i0=F_i0,
        F_beta0=np.einsum("...i,...i->...", b_up, F_i0),
        E_00=np.einsum("...i,...i->...", E_i0, y),
        rho_k=np.zeros_like(y),
    )


def v_cov_deriv(X: np.ndarray, dX_dy: np.ndarray, tensors: BaseTensors) -> np.ndarray:
    """X_i|_j = dX_i/dy^j - X_r C^r_ij, with ``dX_dy[..., i, j]``."""
    return dX_dy - np.einsum("...r,...rij->...ij", X, tensors.Cup)


def metricity_residual(tensors: BaseTensors, conn: ConnectionBundle) -> np.ndarray:
    """g_ij|k for the Cartan connection, as [..., i, j, k]."""
    t = tensors
    dg = t.Ejet.dx_dy2 - 2.0 * np.einsum("...sk,...ijs->...kij", conn.N, t.C)
    return (
        np.einsum("...kij->...ijk", dg)
        - np.einsum("...rik,...rj->...ijk", conn.F, t.g)
        - np.einsum("...rjk,...ir->...ijk", conn.F, t.g)
    )


def supporting_element_residual(tensors: BaseTensors, conn: ConnectionBundle) -> np.ndarray:
    """L_i|j = d_j L_i - N^r_j L_ir - L_r F^r_ij, as [..., i, j]."""
    t = tensors
    return (
        np.swapaxes(t.Ljet.dx_dy, -1, -2)
        - np.einsum("...rj,...ir->...ij", conn.N, t.Lij)
        - np.einsum("...r,...rij->...ij", t.l, conn.F)
    )
