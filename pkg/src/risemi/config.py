"""Scenario definition and large-scale link quantities.

Everything inside the package is in linear units (W, m, m^2). dBm and dB
only appear at the config boundary: ``*_dbm`` keys in config files and the
``rho_db`` EMI ratio.
"""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class InvalidConfigError(ValueError):
    """Raised when a scenario parameter is outside its admissible range."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def ris_element_positions(m_h: int, m_v: int, d_h: float, d_v: float) -> np.ndarray:
    """Return the ``(m_h*m_v, 3)`` element centres of a planar RIS in the y-z plane.

    Element ``m`` (1-based) sits at ``(0, mod(m-1, m_h)*d_h, floor((m-1)/m_h)*d_v)``.
    """
    if m_h < 1 or m_v < 1:
        raise InvalidConfigError(f"RIS grid must be at least 1x1, got {m_h}x{m_v}")
    idx = np.arange(m_h * m_v)
    pos = np.zeros((idx.size, 3))
    pos[:, 1] = (idx % m_h) * d_h
    pos[:, 2] = (idx // m_h) * d_v
    return pos


def rician_factor(d_br: float) -> float:
    """Distance-dependent Rician factor ``10**(1.3 - 0.003*d_br)``."""
    if d_br < 0:
        raise InvalidConfigError(f"distance must be nonnegative, got {d_br}")
    return 10.0 ** (1.3 - 0.003 * d_br)


def path_loss(distance: float, exponent: float, ref_db: float) -> float:
    """Log-distance channel gain ``10**(ref_db/10) * distance**(-exponent)`` (1 m reference)."""
    if distance <= 0:
        raise InvalidConfigError(f"path loss undefined at distance {distance}")
    return 10.0 ** (ref_db / 10.0) * distance ** (-exponent)


def doppler_from_speed(speed: float, f_c: float, t_s: float) -> float:
    """Normalised Doppler ``f_D*T_s`` with ``f_D = f_c*v/c``."""
    return f_c * speed / SPEED_OF_LIGHT * t_s


_DEFAULT_UES = ((50.0, 0.0, 1.7), (50.5, 0.0, 1.7), (51.0, 0.0, 1.7), (51.5, 0.0, 1.7))


def default_ue_positions(k: int) -> tuple[tuple[float, float, float], ...]:
    """UEs on the line ``x = 50, 50.5, ...`` at height 1.7 m (the first four are the reference layout)."""
    return tuple((50.0 + 0.5 * i, 0.0, 1.7) for i in range(k))


@dataclass(frozen=True)
class SystemConfig:
    """All scenario scalars and node geometry.

    EMI power is given either directly (``sigma_e_sq``) or through the
    signal-to-EMI ratio ``rho_db``; exactly one of the two must be set and the
    other is derived (see :meth:`emi_power` and :meth:`rho`). ``sigma_e_sq = 0``
    switches EMI off.

    Model switches:

    ``cascade_nlos_weight``
        ``"area"`` uses ``kappa/(kappa+1) + A/(kappa+1)`` in the cascade
        statistics and scales the NLoS part of the BS-RIS channel by
        ``sqrt(A)`` so simulated channels share those statistics; ``"unit"``
        uses ``kappa/(kappa+1) + 1/(kappa+1)`` with the plain Rician channel.
    ``i2_variant``
        ``"printed"`` pairs UE k's cascade variance with UE j's estimate
        quality in the interference term; ``"symmetric"`` uses UE j throughout.
    ``ris_innovation``
        ``"correlated"`` draws RIS-UE aging innovations with covariance
        ``A*beta_r*R``; ``"iid"`` draws unit-variance i.i.d. innovations.
    ``los_phases``
        ``"random"`` fixes seeded BS-RIS LoS phases; ``"zero"`` sets them to 0.
    """

    n_t: int = 16
    m_h: int = 8
    m_v: int = 8
    k_ue: int = 4
    f_c: float = 2e9
    d_h: float | None = None  # default: lambda/2
    d_v: float | None = None
    bs_pos: tuple[float, float, float] = (-50.0, 0.0, 30.0)
    ris_pos: tuple[float, float, float] = (0.0, 0.0, 15.0)
    ue_pos: tuple[tuple[float, float, float], ...] = _DEFAULT_UES
    p_tau_u: float = dbm_to_watt(25.0)
    tau_p: int = 4
    p_t: float = 1.0
    sigma_d_sq: float = dbm_to_watt(-96.0)
    sigma_c_sq: float = dbm_to_watt(-96.0)
    sigma_k_sq: float = dbm_to_watt(-96.0)
    sigma_e_sq: float | None = None
    rho_db: float | None = 20.0
    tau_c: int = 100
    tau_u: int = 4
    fd_ts: float = 0.001
    # Calibrated so the RIS link matters: weak (blocked) direct path and a
    # cascade that is pilot-noise limited. See the README for the rationale.
    path_loss_exponent_direct: float = 6.0
    path_loss_exponent_ris: float = 2.2
    path_loss_exponent_bs_ris: float = 2.75
    path_loss_ref_db: float = -10.0
    kappa_override: float | None = None
    a_elem_scale: float = 1.0
    cascade_nlos_weight: str = "area"
    i2_variant: str = "printed"
    ris_innovation: str = "correlated"
    los_phases: str = "random"
    geometry_seed: int = 2024

    def __post_init__(self) -> None:
        for name in ("n_t", "k_ue", "tau_p", "tau_c", "tau_u"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be a positive integer")
        if self.m_h < 0 or self.m_v < 0:
            raise InvalidConfigError("RIS grid dimensions must be nonnegative")
        if self.tau_p < self.k_ue:
            raise InvalidConfigError("tau_p must be >= k_ue for orthogonal pilots")
        if self.tau_u < self.tau_p:
            raise InvalidConfigError("tau_u must be >= tau_p")
        if self.tau_c <= self.tau_u:
            raise InvalidConfigError("tau_c must exceed tau_u")
        if len(self.ue_pos) != self.k_ue:
            raise InvalidConfigError(f"need {self.k_ue} UE positions, got {len(self.ue_pos)}")
        if self.f_c <= 0:
            raise InvalidConfigError("carrier frequency must be positive")
        for name in ("p_tau_u", "p_t", "sigma_d_sq", "sigma_c_sq", "sigma_k_sq"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be strictly positive")
        if (self.sigma_e_sq is None) == (self.rho_db is None):
            raise InvalidConfigError("set exactly one of sigma_e_sq and rho_db")
        if self.sigma_e_sq is not None and self.sigma_e_sq < 0:
            raise InvalidConfigError("sigma_e_sq must be nonnegative")
        if self.fd_ts < 0:
            raise InvalidConfigError("fd_ts must be nonnegative")
        if self.a_elem_scale < 0:
            raise InvalidConfigError("a_elem_scale must be nonnegative")
        if self.kappa_override is not None and self.kappa_override < 0:
            raise InvalidConfigError("kappa_override must be nonnegative")
        _check_choice("cascade_nlos_weight", self.cascade_nlos_weight, ("area", "unit"))
        _check_choice("i2_variant", self.i2_variant, ("printed", "symmetric"))
        _check_choice("ris_innovation", self.ris_innovation, ("correlated", "iid"))
        _check_choice("los_phases", self.los_phases, ("random", "zero"))

    # -- derived scalars -------------------------------------------------

    @property
    def m(self) -> int:
        return self.m_h * self.m_v

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def elem_width(self) -> float:
        base = self.wavelength / 2 if self.d_h is None else self.d_h
        return base * math.sqrt(self.a_elem_scale)

    @property
    def elem_height(self) -> float:
        base = self.wavelength / 2 if self.d_v is None else self.d_v
        return base * math.sqrt(self.a_elem_scale)

    @property
    def a_elem(self) -> float:
        return self.elem_width * self.elem_height

    @property
    def p_tau_p(self) -> float:
        return self.tau_p * self.p_tau_u

    @property
    def tau_d(self) -> int:
        return self.tau_c - self.tau_u

    def large_scale(self) -> LargeScaleParams:
        bs, ris = np.asarray(self.bs_pos), np.asarray(self.ris_pos)
        d_br = float(np.linalg.norm(ris - bs))
        beta_d, beta_r = [], []
        for ue in self.ue_pos:
            ue = np.asarray(ue)
            beta_d.append(path_loss(float(np.linalg.norm(ue - bs)),
                                    self.path_loss_exponent_direct, self.path_loss_ref_db))
            beta_r.append(path_loss(float(np.linalg.norm(ue - ris)),
                                    self.path_loss_exponent_ris, self.path_loss_ref_db))
        beta_br = path_loss(d_br, self.path_loss_exponent_bs_ris, self.path_loss_ref_db)
        kappa = rician_factor(d_br) if self.kappa_override is None else self.kappa_override
        return LargeScaleParams(
            beta_d=np.array(beta_d), beta_r=np.array(beta_r),
            beta_br=beta_br, kappa=kappa, d_br=d_br,
        )

    def emi_power(self, beta_br: float | None = None) -> float:
        """EMI power at the RIS, ``P_tau_p*beta_br/rho`` when ``rho_db`` is authoritative."""
        if self.sigma_e_sq is not None:
            return self.sigma_e_sq
        if beta_br is None:
            beta_br = self.large_scale().beta_br
        return self.p_tau_p * beta_br / db_to_linear(self.rho_db)

    def rho(self, beta_br: float | None = None) -> float:
        """Linear signal-to-EMI ratio at each RIS element."""
        if self.rho_db is not None:
            return db_to_linear(self.rho_db)
        if beta_br is None:
            beta_br = self.large_scale().beta_br
        if self.sigma_e_sq == 0:
            return math.inf
        return self.p_tau_p * beta_br / self.sigma_e_sq

    def element_positions(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, 3))
        return ris_element_positions(self.m_h, self.m_v, self.elem_width, self.elem_height)

    def los_phase_matrix(self) -> np.ndarray:
        """Deterministic ``(n_t, m)`` LoS phases of the BS-RIS channel."""
        if self.los_phases == "zero":
            return np.zeros((self.n_t, self.m))
        rng = np.random.default_rng([self.geometry_seed, 1])
        return rng.uniform(0.0, 2 * np.pi, size=(self.n_t, self.m))

    # -- plumbing ----------------------------------------------------------

    def replace(self, **changes: Any) -> SystemConfig:
        if "m" in changes:
            m = int(changes.pop("m"))
            changes.update(square_grid(m))
        if "sigma_e_sq" in changes and "rho_db" not in changes:
            changes["rho_db"] = None
        if "rho_db" in changes and "sigma_e_sq" not in changes:
            changes["sigma_e_sq"] = None
        if "k_ue" in changes and "ue_pos" not in changes:
            changes["ue_pos"] = default_ue_positions(int(changes["k_ue"]))
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LargeScaleParams:
    beta_d: np.ndarray
    beta_r: np.ndarray
    beta_br: float
    kappa: float
    d_br: float = field(default=0.0)


def _check_choice(name: str, value: str, allowed: Sequence[str]) -> None:
    if value not in allowed:
        raise InvalidConfigError(f"{name} must be one of {allowed}, got {value!r}")


def square_grid(m: int) -> dict[str, int]:
    """Grid dimensions for ``m`` elements, as square as possible (``m_h >= m_v``)."""
    if m < 0:
        raise InvalidConfigError("element count must be nonnegative")
    if m == 0:
        return {"m_h": 0, "m_v": 0}
    m_v = int(math.isqrt(m))
    while m % m_v:
        m_v -= 1
    return {"m_h": m // m_v, "m_v": m_v}


# -- key/value config files ----------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def _parse_value(text: str) -> Any:
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(key: str, value: Any) -> tuple[str, Any]:
    if key.endswith("_dbm"):
        base = key[: -len("_dbm")]
        if base not in _FIELDS:
            raise InvalidConfigError(f"unknown config key {key!r}")
        return base, dbm_to_watt(float(value))
    if key == "m":
        return key, int(value)
    if key not in _FIELDS:
        raise InvalidConfigError(f"unknown config key {key!r}")
    if key == "ue_pos":
        return key, tuple(tuple(float(c) for c in p) for p in value)
    if key in ("bs_pos", "ris_pos"):
        return key, tuple(float(c) for c in value)
    return key, value


def parse_assignments(lines: Iterable[str]) -> dict[str, Any]:
    """Parse ``key = value`` lines (``#`` starts a comment) into field overrides."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        k, v = _coerce(key.strip(), _parse_value(value))
        out[k] = v
    return out


def load_config(path: str | Path | None = None, overrides: Sequence[str] = (),
                base: SystemConfig | None = None) -> SystemConfig:
    """Build a config from defaults, an optional file and ``key=value`` overrides."""
    cfg = base or SystemConfig()
    changes: dict[str, Any] = {}
    if path is not None:
        changes.update(parse_assignments(Path(path).read_text().splitlines()))
    changes.update(parse_assignments(overrides))
    if "ue_pos" in changes and "k_ue" not in changes:
        changes["k_ue"] = len(changes["ue_pos"])
    return cfg.replace(**changes) if changes else cfg
