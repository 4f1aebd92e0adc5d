"""Orthogonal pilots, uplink pilot reception with RIS-side EMI, and MMSE estimation.

The second-order statistics of the estimators live in :class:`EstimationStats`;
they are the inputs to the closed-form SINR terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from risemi.channels import AgingProfile
from risemi.config import InvalidConfigError, LargeScaleParams, SystemConfig
from risemi.correlation import CorrelationMatrix, complex_normal


@dataclass(frozen=True, eq=False)
class PilotBook:
    psi: np.ndarray  # (tau_p, K), orthonormal columns

    @property
    def tau_p(self) -> int:
        return self.psi.shape[0]

    def pilot(self, k: int) -> np.ndarray:
        return self.psi[:, k]


def build_pilots(tau_p: int, k_ue: int) -> PilotBook:
    """First ``k_ue`` columns of the unitary ``tau_p``-point DFT matrix."""
    if k_ue < 1 or tau_p < k_ue:
        raise InvalidConfigError(f"need tau_p >= k_ue >= 1, got tau_p={tau_p}, k_ue={k_ue}")
    rows = np.arange(tau_p)[:, None]
    cols = np.arange(k_ue)[None, :]
    return PilotBook(np.exp(-2j * np.pi * rows * cols / tau_p) / np.sqrt(tau_p))


@dataclass(frozen=True, eq=False)
class EstimationStats:
    """Per-UE deterministic estimator statistics (arrays of length K)."""

    xi_ck: np.ndarray
    q: float
    beta_d: np.ndarray
    sigma_e1_sq: np.ndarray
    sigma_e2_sq: np.ndarray
    sigma_e3_sq: np.ndarray
    var_ghat_d: np.ndarray
    var_gtilde_d: np.ndarray
    var_ghat_c: np.ndarray
    var_gtilde_c: np.ndarray
    den_c: np.ndarray
    shrink_d: np.ndarray
    shrink_c: np.ndarray

    @property
    def k_ue(self) -> int:
        return self.xi_ck.size

    def rows(self):
        for k in range(self.k_ue):
            yield {
                "k": k,
                "xi_ck": self.xi_ck[k],
                "q": self.q,
                "sigma_e1_sq": self.sigma_e1_sq[k],
                "sigma_e2_sq": self.sigma_e2_sq[k],
                "sigma_e3_sq": self.sigma_e3_sq[k],
                "var_ghat_d": self.var_ghat_d[k],
                "var_ghat_c": self.var_ghat_c[k],
            }


def cascade_weight(kappa: float, a_elem: float, mode: str = "area") -> float:
    """LoS/NLoS weight of the cascade variance: ``k/(k+1) + A/(k+1)`` or ``k/(k+1) + 1/(k+1)``."""
    nlos = a_elem if mode == "area" else 1.0
    return kappa / (kappa + 1) + nlos / (kappa + 1)


def compute_stats(
    *,
    a_elem: float,
    beta_d: np.ndarray,
    beta_r: np.ndarray,
    beta_br: float,
    kappa: float,
    sigma_e_sq: float,
    trace_r_e: float,
    p_tau_p: float,
    sigma_d_sq: float,
    sigma_c_sq: float,
    nlos_weight: str = "area",
) -> EstimationStats:
    beta_d = np.asarray(beta_d, dtype=float)
    beta_r = np.asarray(beta_r, dtype=float)
    if np.any(beta_d <= 0) or p_tau_p <= 0:
        raise InvalidConfigError("path losses and pilot power must be positive")
    w = cascade_weight(kappa, a_elem, nlos_weight)
    xi = a_elem * beta_r * beta_br * w
    q = a_elem * sigma_e_sq * trace_r_e * beta_br * w
    d = sigma_d_sq + p_tau_p * beta_d
    e1 = p_tau_p * xi * d
    e2 = p_tau_p * beta_d * (sigma_d_sq + sigma_c_sq)
    e3 = q * d
    total = e1 + e2 + e3 + sigma_d_sq * sigma_c_sq
    var_gtilde_d = sigma_d_sq * beta_d / d
    shrink_c = xi / (var_gtilde_d + xi + q + sigma_c_sq / p_tau_p)
    return EstimationStats(
        xi_ck=xi,
        q=q,
        beta_d=beta_d,
        sigma_e1_sq=e1,
        sigma_e2_sq=e2,
        sigma_e3_sq=e3,
        var_ghat_d=p_tau_p * beta_d**2 / d,
        var_gtilde_d=var_gtilde_d,
        var_ghat_c=xi * e1 / total,
        var_gtilde_c=xi * (e2 + e3) / total,
        den_c=total,
        shrink_d=1.0 / (1.0 + sigma_d_sq / (p_tau_p * beta_d)),
        shrink_c=shrink_c,
    )


def estimation_stats(cfg: SystemConfig, ls: LargeScaleParams | None = None,
                     corr: CorrelationMatrix | None = None) -> EstimationStats:
    ls = ls or cfg.large_scale()
    trace_r_e = float(np.trace(corr.emi)) if corr is not None else float(cfg.m)
    return compute_stats(
        a_elem=cfg.a_elem, beta_d=ls.beta_d, beta_r=ls.beta_r, beta_br=ls.beta_br,
        kappa=ls.kappa, sigma_e_sq=cfg.emi_power(ls.beta_br), trace_r_e=trace_r_e,
        p_tau_p=cfg.p_tau_p, sigma_d_sq=cfg.sigma_d_sq, sigma_c_sq=cfg.sigma_c_sq,
        nlos_weight=cfg.cascade_nlos_weight,
    )


# -- pilot phase simulation ------------------------------------------------------

def receive_pilot_direct(g_d: np.ndarray, pilots: PilotBook, p_tau_p: float, sigma_d_sq: float,
                         rng: np.random.Generator) -> np.ndarray:
    """``Y = sqrt(P) G_d Psi^H + Z`` with ``Z`` i.i.d. ``CN(0, sigma_d^2)``; batch axes lead."""
    y = np.sqrt(p_tau_p) * g_d @ pilots.psi.conj().T
    return y + np.sqrt(sigma_d_sq) * complex_normal(rng, y.shape)


def despread(y: np.ndarray, pilot_k: np.ndarray, p_tau_p: float) -> np.ndarray:
    """Project onto UE k's pilot: ``y phi_k / sqrt(P)``."""
    return (y @ pilot_k) / np.sqrt(p_tau_p)


def mmse_direct(y_tilde: np.ndarray, beta_d_k: float, sigma_d_sq: float, p_tau_p: float) -> np.ndarray:
    if beta_d_k <= 0 or p_tau_p <= 0:
        raise InvalidConfigError("beta_d and pilot power must be positive")
    return y_tilde / (1.0 + sigma_d_sq / (p_tau_p * beta_d_k))


def receive_pilot_cascade(
    g_d: np.ndarray,
    ghat_d: np.ndarray,
    g_br: np.ndarray,
    g_r: np.ndarray,
    v: np.ndarray,
    pilots: PilotBook,
    p_tau_p: float,
    sigma_c_sq: float,
    emi: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Despread cascade-phase observations for all UEs, direct estimate removed.

    Shapes (with optional leading batch axes): ``g_d``/``ghat_d`` ``(n_t, K)``,
    ``g_br`` ``(n_t, M)``, ``g_r`` ``(M, K)``, ``v`` ``(M,)``, ``emi`` ``(M, tau_p)``.
    The RIS-side signal ``G_r = G_r,ue Psi^H + N`` passes through
    ``G_br diag(v)`` and is received at pilot power. Returns ``(n_t, K)`` with
    column k equal to ``g~_d,k + G_br diag(v) g_r,k + G_br diag(v) N phi_k + Z phi_k/sqrt(P)``.
    """
    psi = pilots.psi
    g_brv = g_br * v[..., None, :]
    at_ris = g_r @ psi.conj().T + emi
    y = np.sqrt(p_tau_p) * (g_d @ psi.conj().T + g_brv @ at_ris)
    y = y + np.sqrt(sigma_c_sq) * complex_normal(rng, y.shape)
    y_tilde = (y @ psi) / np.sqrt(p_tau_p)
    return y_tilde - ghat_d


def receive_cascade_elements(
    g_tilde_d: np.ndarray,
    g_br: np.ndarray,
    g_r_k: np.ndarray,
    v: np.ndarray,
    emi: np.ndarray,
    p_tau_p: float,
    sigma_c_sq: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Element-by-element cascade observations for one UE, ``(..., n_t, M)``.

    Column m is what the BS sees in element m's training slot:
    ``g~_d,k + g_br,m g_r,km + G_br diag(v) n_m + z_m/sqrt(P)``, where ``n_m``
    (column m of ``emi``, shape ``(..., M, M)``) is the EMI impinging on the
    panel during that slot and ``z_m`` is fresh receiver noise.
    """
    g_brv = g_br * v[..., None, :]
    obs = g_tilde_d[..., :, None] + g_br * g_r_k[..., None, :] + g_brv @ emi
    return obs + np.sqrt(sigma_c_sq / p_tau_p) * complex_normal(rng, obs.shape)


def mmse_cascade(y_tilde_c: np.ndarray, shrink_c) -> np.ndarray:
    """Scalar shrinkage of the cascade observation by ``xi/(var~_d + xi + Q + sigma_c^2/P)``."""
    return y_tilde_c * shrink_c


def aged_error_variances(stats: EstimationStats, profile: AgingProfile, n) -> tuple[np.ndarray, np.ndarray]:
    """Per-UE variances of the aged direct and cascade errors at symbol ``n``."""
    r0 = profile.rho0(n) ** 2
    r1 = profile.rho1(n) ** 2
    return stats.beta_d - r0 * stats.var_ghat_d, stats.xi_ck - r1 * stats.var_ghat_c
