"""Closed-form downlink SINR terms under MRT precoding with aged, imperfect CSI.

All functions are deterministic. Symbol indices ``n`` may be scalars or
arrays; per-UE quantities broadcast along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from risemi.channels import AgingProfile, RisPanel
from risemi.config import SystemConfig
from risemi.correlation import CorrelationMatrix, build_correlation
from risemi.estimation import EstimationStats, estimation_stats


class DegenerateConfigError(ValueError):
    """Raised when the precoder normalisation has a zero denominator."""


def _estimate_power(stats: EstimationStats, profile: AgingProfile, n, m: int):
    """Per-entry variance of the aged channel estimate seen by the precoder, ``(..., K)``."""
    r0 = np.asarray(profile.rho0(n))[..., None] ** 2
    r1 = np.asarray(profile.rho1(n))[..., None] ** 2
    return r0 * stats.var_ghat_d + m * r1 * stats.var_ghat_c


def _error_power(stats: EstimationStats, profile: AgingProfile, n, m: int):
    r0 = np.asarray(profile.rho0(n))[..., None] ** 2
    r1 = np.asarray(profile.rho1(n))[..., None] ** 2
    return (stats.beta_d - r0 * stats.var_ghat_d) + m * (stats.xi_ck - r1 * stats.var_ghat_c)


def zeta_sq_deterministic(stats: EstimationStats, profile: AgingProfile, n, n_t: int, m: int,
                          p_t: float = 1.0):
    """Precoder normalisation with ``tr(G G^H)`` replaced by its expectation.

    Raises when the expected trace is zero or negligible (below ``1e-12`` of
    its unaged value), i.e. when every estimate has fully decorrelated.
    """
    denom = n_t * np.sum(_estimate_power(stats, profile, n, m), axis=-1)
    fresh = n_t * np.sum(stats.var_ghat_d + m * stats.var_ghat_c)
    if np.any(denom <= 1e-12 * fresh) or fresh <= 0:
        raise DegenerateConfigError("expected precoder trace is zero (estimates fully aged)")
    return p_t / denom


def term_i0(stats, profile, n, n_t, m, zeta_sq):
    """Desired-signal power ``|E[G_k f_k]|^2`` for every UE."""
    s = _estimate_power(stats, profile, n, m)
    return np.asarray(zeta_sq)[..., None] * (n_t * s) ** 2


def term_i1(stats, profile, n, n_t, m, zeta_sq):
    """Beamforming-uncertainty variance for every UE."""
    s = _estimate_power(stats, profile, n, m)
    e = _error_power(stats, profile, n, m)
    return np.asarray(zeta_sq)[..., None] * n_t * s * e


def term_i2(stats, profile, n, n_t, m, zeta_sq, variant: str = "printed"):
    """Inter-user interference for every UE.

    ``variant="printed"`` scales UE j's cascade estimate quality by UE k's
    cascade gain (``xi_k sigma_e1,j^2 / den_j``); ``"symmetric"`` uses ``xi_j``.
    """
    r0 = np.asarray(profile.rho0(n))[..., None, None] ** 2
    r1 = np.asarray(profile.rho1(n))[..., None, None] ** 2
    e = _error_power(stats, profile, n, m)  # (..., K) indexed by k
    if variant == "printed":
        vc_kj = stats.xi_ck[:, None] * stats.sigma_e1_sq[None, :] / stats.den_c[None, :]
    elif variant == "symmetric":
        vc_kj = np.broadcast_to(stats.var_ghat_c[None, :], (stats.k_ue, stats.k_ue))
    else:
        raise ValueError(f"unknown I2 variant {variant!r}")
    s_kj = m * r1 * vc_kj + r0 * stats.var_ghat_d[None, :]
    off = 1.0 - np.eye(stats.k_ue)
    total = np.sum(s_kj * off, axis=-1)
    return np.asarray(zeta_sq)[..., None] * n_t * total * e


def emi_trace(panel: RisPanel | None, corr: CorrelationMatrix, average: bool = False) -> float:
    """``tr(Phi^H R Phi R_e)``; with ``average`` the mean over uniform random phases."""
    if corr.m == 0:
        return 0.0
    r, r_e = corr.entries, corr.emi
    if average or panel is None:
        return float(np.sum(np.diag(r) * np.diag(r_e)))
    v = panel.reflection_vector
    # sum_{m,l} conj(v_m) R_ml v_l R_e,lm
    return float(np.real(v.conj() @ ((r * r_e.T) @ v)))


def term_i3(a_elem: float, beta_r, sigma_e_sq: float, trace: float):
    """EMI power leaking to each UE through the RIS."""
    return a_elem**2 * np.asarray(beta_r) * sigma_e_sq * trace


def term_i4(sigma_k_sq):
    return sigma_k_sq


def spectral_efficiency(gammas, tau_c: int) -> float:
    """Use-and-then-forget SE: ``sum_n log2(1 + gamma[n]) / tau_c`` over the downlink symbols."""
    return float(np.sum(np.log2(1.0 + np.asarray(gammas, dtype=float)), axis=-1) / tau_c)


@dataclass(frozen=True)
class SinrBreakdown:
    k: int
    n: int
    i0: float
    i1: float
    i2: float
    i3: float
    i4: float
    zeta_sq: float
    gamma: float

    @property
    def se_contribution(self) -> float:
        return float(np.log2(1.0 + self.gamma))


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Closed-form terms on a grid of symbols; arrays are ``(len(n), K)``."""

    n: np.ndarray
    i0: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    i4: np.ndarray
    zeta_sq: np.ndarray
    tau_c: int

    @property
    def gamma(self) -> np.ndarray:
        return self.i0 / (self.i1 + self.i2 + self.i3 + self.i4)

    @property
    def se_per_ue(self) -> np.ndarray:
        """Per-UE SE, valid when ``n`` spans the full downlink ``1..tau_d``."""
        return np.sum(np.log2(1.0 + self.gamma), axis=0) / self.tau_c

    @property
    def sum_se(self) -> float:
        return float(np.sum(self.se_per_ue))

    def breakdowns(self):
        g = self.gamma
        for a, n in enumerate(self.n):
            for k in range(self.i0.shape[1]):
                yield SinrBreakdown(k=k, n=int(n), i0=self.i0[a, k], i1=self.i1[a, k],
                                    i2=self.i2[a, k], i3=self.i3[a, k], i4=self.i4[a, k],
                                    zeta_sq=self.zeta_sq[a], gamma=g[a, k])


def evaluate(cfg: SystemConfig, n=None, *, panel: RisPanel | None = None,
             corr: CorrelationMatrix | None = None) -> Evaluation:
    """Closed-form SINR terms for all UEs at symbols ``n`` (default ``1..tau_d``).

    Without a ``panel`` the EMI term uses the trace averaged over random phases.
    """
    if n is None:
        n = np.arange(1, cfg.tau_d + 1)
    n = np.atleast_1d(np.asarray(n))
    ls = cfg.large_scale()
    if corr is None:
        corr = build_correlation(cfg.element_positions(), cfg.wavelength)
    stats = estimation_stats(cfg, ls, corr)
    profile = AgingProfile(cfg.fd_ts)
    m = cfg.m
    zeta_sq = zeta_sq_deterministic(stats, profile, n, cfg.n_t, m, cfg.p_t)
    i0 = term_i0(stats, profile, n, cfg.n_t, m, zeta_sq)
    i1 = term_i1(stats, profile, n, cfg.n_t, m, zeta_sq)
    i2 = term_i2(stats, profile, n, cfg.n_t, m, zeta_sq, cfg.i2_variant)
    trace = emi_trace(panel, corr, average=panel is None)
    i3 = np.broadcast_to(term_i3(cfg.a_elem, ls.beta_r, cfg.emi_power(ls.beta_br), trace), i0.shape)
    i4 = np.full(i0.shape, term_i4(cfg.sigma_k_sq))
    return Evaluation(n=n, i0=i0, i1=i1, i2=i2, i3=np.array(i3), i4=i4, zeta_sq=zeta_sq,
                      tau_c=cfg.tau_c)
