"""Sinc-kernel spatial correlation of the RIS and correlated Gaussian sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    pass


def sinc(x):
    """Normalised sinc, ``sin(pi x)/(pi x)`` with ``sinc(0) = 1``."""
    return np.sinc(x)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly symmetric complex normal samples with unit variance per entry."""
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    z = rng.standard_normal((*shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Real symmetric PSD correlation ``R`` with a square-root factor ``L`` (``L L^H = R``).

    ``r_e`` is the EMI spatial correlation; it defaults to ``R`` itself.
    """

    entries: np.ndarray
    factor: np.ndarray
    eigen_floor: float = 0.0
    min_eigenvalue: float = 0.0
    r_e: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def emi(self) -> np.ndarray:
        return self.entries if self.r_e is None else self.r_e

    def with_emi(self, r_e: np.ndarray) -> CorrelationMatrix:
        r_e = np.asarray(r_e, dtype=float)
        if r_e.shape != self.entries.shape:
            raise InvalidInputError("R_e must match R in shape")
        return CorrelationMatrix(self.entries, self.factor, self.eigen_floor,
                                 self.min_eigenvalue, r_e)


def factorize(r: np.ndarray, eigen_floor: float = 0.0) -> tuple[np.ndarray, float]:
    """Square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``eigen_floor`` are clipped to it. Returns the factor
    and the smallest eigenvalue seen before clipping.
    """
    if r.size == 0:
        return np.zeros_like(r), 0.0
    w, v = np.linalg.eigh(r)
    w_min = float(w[0])
    w = np.clip(w, eigen_floor, None)
    return v * np.sqrt(w), w_min


def build_correlation(positions, wavelength: float) -> CorrelationMatrix:
    """Correlation ``[R]_{n,m} = sinc(2 |u_n - u_m| / lambda)`` over element positions."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if wavelength <= 0:
        raise InvalidInputError("wavelength must be positive")
    if np.isnan(pos).any():
        raise InvalidInputError("element positions contain NaN")
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    r = sinc(2.0 * dist / wavelength)
    np.fill_diagonal(r, 1.0)
    factor, w_min = factorize(r)
    return CorrelationMatrix(entries=r, factor=factor, min_eigenvalue=w_min)


def sample_correlated(scale: float, corr: CorrelationMatrix, rng: np.random.Generator,
                      size: int | tuple[int, ...] = ()) -> np.ndarray:
    """Draw ``x ~ CN(0, scale*R)``.

    ``size`` prepends batch dimensions; the element axis is last.
    """
    if scale < 0:
        raise InvalidInputError("scale must be nonnegative")
    size = (size,) if isinstance(size, int) else tuple(size)
    w = complex_normal(rng, (*size, corr.m))
    return np.sqrt(scale) * (w @ corr.factor.T)
