"""Random channel generation, RIS cascade and Jakes channel aging.

Functions accept a leading batch axis where noted so that the Monte-Carlo
engine can draw a whole chunk of independent blocks at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from risemi.correlation import CorrelationMatrix, InvalidInputError, complex_normal, sample_correlated


def jakes_rho(n, fd_ts: float):
    """Temporal correlation ``J0(2 pi n fD Ts)`` after ``n`` symbols."""
    return j0(2.0 * np.pi * np.asarray(n, dtype=float) * fd_ts)


@dataclass(frozen=True)
class AgingProfile:
    """Jakes coefficients for the direct (``rho0``) and RIS-UE (``rho1``) links."""

    fd_ts: float

    def rho0(self, n):
        return jakes_rho(n, self.fd_ts)

    def rho1(self, n):
        return jakes_rho(n, self.fd_ts)

    @staticmethod
    def complement(rho):
        return np.sqrt(np.clip(1.0 - np.square(rho), 0.0, None))

    def rho_bar0(self, n):
        return self.complement(self.rho0(n))

    def rho_bar1(self, n):
        return self.complement(self.rho1(n))


@dataclass(frozen=True, eq=False)
class RisPanel:
    """Unit-amplitude RIS reflection coefficients ``v_m = exp(j theta_m)``."""

    phases: np.ndarray
    amplitude: float = 1.0

    @property
    def m(self) -> int:
        return self.phases.shape[-1]

    @property
    def reflection_vector(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phases)

    @property
    def reflection_matrix(self) -> np.ndarray:
        return np.diag(self.reflection_vector)

    @classmethod
    def random(cls, m: int, rng: np.random.Generator) -> RisPanel:
        return cls(rng.uniform(0.0, 2 * np.pi, size=m))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Channels of one coherence block at symbol ``symbol_index``.

    ``g_d`` is ``(n_t, K)``, ``g_br`` is ``(n_t, M)``, ``g_r`` is ``(M, K)``;
    ``g_c[k]`` is UE k's ``(n_t, M)`` cascade with columns ``g_br[:, m]*g_r[m, k]``.
    """

    g_d: np.ndarray
    g_br: np.ndarray
    g_r: np.ndarray
    symbol_index: int = 0

    @property
    def g_c(self) -> np.ndarray:
        return self.g_br[None, :, :] * self.g_r.T[:, None, :]


def gen_bs_ris(beta_br: float, kappa: float, los_phases: np.ndarray, rng: np.random.Generator,
               size: int | tuple[int, ...] = (), nlos_scale: float = 1.0) -> np.ndarray:
    """Rician BS-RIS channel ``sqrt(beta)(sqrt(k/(k+1)) G_los + sqrt(s/(k+1)) G_nlos)``.

    ``nlos_scale`` (``s``) is 1 for the textbook Rician split.
    """
    if kappa < 0:
        raise InvalidInputError("Rician factor must be nonnegative")
    if beta_br <= 0:
        raise InvalidInputError("beta_br must be positive")
    size = (size,) if isinstance(size, int) else tuple(size)
    los = np.exp(1j * np.asarray(los_phases))
    nlos = complex_normal(rng, (*size, *los.shape))
    return np.sqrt(beta_br) * (np.sqrt(kappa / (kappa + 1)) * los
                               + np.sqrt(nlos_scale / (kappa + 1)) * nlos)


def gen_ris_ue(a_elem: float, beta_r_k: float, corr: CorrelationMatrix, rng: np.random.Generator,
               size: int | tuple[int, ...] = ()) -> np.ndarray:
    """RIS-UE channel ``g_r,k ~ CN(0, A beta_r,k R)``."""
    return sample_correlated(a_elem * beta_r_k, corr, rng, size)


def cascade(g_br: np.ndarray, panel: RisPanel, g_r_k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-element cascade ``G_ck`` (columns ``g_br,m * g_r,km``) and effective vector ``G_ck v``."""
    g_br = np.asarray(g_br)
    g_r_k = np.asarray(g_r_k)
    if g_br.shape[-1] != g_r_k.shape[-1] or g_br.shape[-1] != panel.m:
        raise InvalidInputError(
            f"dimension mismatch: G_br {g_br.shape}, g_r {g_r_k.shape}, panel M={panel.m}")
    g_ck = g_br * g_r_k[..., None, :]
    return g_ck, g_ck @ panel.reflection_vector


def evolve_direct(g0: np.ndarray, n: int, profile: AgingProfile, beta_d_k: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Direct channel after ``n`` symbols: ``rho0 g0 + rho0_bar e``, ``e ~ CN(0, beta_d I)``."""
    if n == 0:
        return np.array(g0, copy=True)
    rho = float(profile.rho0(n))
    e = np.sqrt(beta_d_k) * complex_normal(rng, np.shape(g0))
    return rho * g0 + profile.complement(rho) * e


def evolve_ris_ue(g0: np.ndarray, n: int, profile: AgingProfile, a_elem: float, beta_r_k: float,
                  corr: CorrelationMatrix, rng: np.random.Generator,
                  innovation: str = "correlated") -> np.ndarray:
    """RIS-UE channel after ``n`` symbols with innovation ``CN(0, A beta_r R)``.

    ``innovation="iid"`` draws unit-variance i.i.d. innovations instead, which
    does not preserve the marginal distribution of ``g0``.
    """
    if n == 0:
        return np.array(g0, copy=True)
    rho = float(profile.rho1(n))
    batch = np.shape(g0)[:-1]
    if innovation == "correlated":
        e = sample_correlated(a_elem * beta_r_k, corr, rng, batch)
    elif innovation == "iid":
        e = complex_normal(rng, np.shape(g0))
    else:
        raise InvalidInputError(f"unknown innovation model {innovation!r}")
    return rho * g0 + profile.complement(rho) * e
