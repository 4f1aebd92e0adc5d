"""Stand-alone MISO downlink (no RIS) used as a cross-check of the RIS analytics.

Deliberately shares no code with the rest of the package beyond the config
dataclass: distances, path loss, Bessel correlation and the MRT SINR are all
recomputed here from scratch.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import jv

from risemi.config import SystemConfig


def _gain(a, b, exponent: float, ref_db: float) -> float:
    d = math.dist(a, b)
    return 10.0 ** (ref_db / 10.0) / d**exponent


def miso_sinr(cfg: SystemConfig, n) -> np.ndarray:
    """MRT SINR ``(len(n), K)`` of the direct link alone with MMSE CSI aged by Jakes' law."""
    n = np.atleast_1d(np.asarray(n, dtype=float))
    beta = np.array([_gain(cfg.bs_pos, u, cfg.path_loss_exponent_direct, cfg.path_loss_ref_db)
                     for u in cfg.ue_pos])
    pilot = cfg.tau_p * cfg.p_tau_u
    known = pilot * beta**2 / (cfg.sigma_d_sq + pilot * beta)  # estimate power per antenna
    corr2 = jv(0, 2.0 * math.pi * n * cfg.fd_ts)[:, None] ** 2
    est = corr2 * known                                          # (S, K)
    unknown = beta - est
    scale = cfg.p_t / (cfg.n_t * est.sum(axis=1, keepdims=True))
    signal = scale * (cfg.n_t * est) ** 2
    own = scale * cfg.n_t * est * unknown
    others = scale * cfg.n_t * (est.sum(axis=1, keepdims=True) - est) * unknown
    return signal / (own + others + cfg.sigma_k_sq)


def miso_se(cfg: SystemConfig) -> np.ndarray:
    """Per-UE use-and-then-forget SE over the ``tau_c - tau_u`` downlink symbols."""
    n = np.arange(1, cfg.tau_c - cfg.tau_u + 1)
    return np.log2(1.0 + miso_sinr(cfg, n)).sum(axis=0) / cfg.tau_c
