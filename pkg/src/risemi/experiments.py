"""Parameter sweeps and the trend checks behind the three SE figures.

Sweeps emit one row per axis value and UE plus a ``sum`` row; every row
carries the hash of the fully resolved config that produced it. Figure checks
hard-assert directional trends and report percentage effects next to
reference values with a +/-50% band (reported, never asserted).
"""

from __future__ import annotations

import ast
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from risemi.analytics import evaluate
from risemi.config import InvalidConfigError, SystemConfig, load_config, parse_assignments
from risemi.montecarlo import empirical_terms, run_trials

AXES = ("m", "kappa_override", "fd_ts", "rho_db", "tau_c", "a_elem_scale", "symbol_index")
MODES = ("analytic", "montecarlo", "both")
ANCHOR_BAND = 0.5


class InvalidSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: ``scenario`` with ``axis`` set to each of ``values`` in turn.

    ``symbol_index`` sweeps report the per-symbol rate ``log2(1 + gamma_k[n])``
    instead of the block SE. Monte-Carlo points use ``trials`` blocks and
    sample the SINR terms every ``mc_stride`` symbols (linear interpolation of
    the SINR in between).
    """

    axis: str
    values: tuple
    scenario: SystemConfig = field(default_factory=SystemConfig)
    mode: str = "analytic"
    output_path: str | None = None
    label: str = ""
    trials: int = 500
    seed: int = 0
    mc_stride: int = 8

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise InvalidSpecError(f"unknown axis {self.axis!r}; expected one of {AXES}")
        if self.mode not in MODES:
            raise InvalidSpecError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        values = tuple(self.values)
        if not values:
            raise InvalidSpecError("sweep values must be nonempty")
        if any(v is None or not math.isfinite(float(v)) for v in values):
            raise InvalidSpecError("sweep values must be finite numbers")
        object.__setattr__(self, "values", values)
        if self.trials < 2 or self.mc_stride < 1:
            raise InvalidSpecError("need trials >= 2 and mc_stride >= 1")

    @classmethod
    def from_file(cls, path: str | Path, base: SystemConfig | None = None) -> SweepSpec:
        """Read a ``key = value`` spec; non-sweep keys are scenario overrides."""
        own = {"axis", "values", "mode", "output_path", "label", "trials", "seed", "mc_stride"}
        lines = Path(path).read_text().splitlines()
        kwargs: dict[str, Any] = {}
        scenario_lines = []
        for raw in lines:
            line = raw.split("#", 1)[0].strip()
            key = line.split("=", 1)[0].strip() if "=" in line else ""
            if key in own:
                kwargs.update({k: v for k, v in _parse_own(line).items()})
            elif line:
                scenario_lines.append(line)
        if "axis" not in kwargs or "values" not in kwargs:
            raise InvalidSpecError("spec file needs 'axis' and 'values'")
        try:
            changes = parse_assignments(scenario_lines)
        except InvalidConfigError as exc:
            raise InvalidSpecError(str(exc)) from exc
        scenario = (base or SystemConfig()).replace(**changes) if changes else (base or SystemConfig())
        return cls(scenario=scenario, **kwargs)


def _parse_own(line: str) -> dict[str, Any]:
    key, value = (part.strip() for part in line.split("=", 1))
    if key in ("axis", "mode", "output_path", "label"):
        return {key: value.strip("'\"")}
    parsed = ast.literal_eval(value)
    if key == "values":
        parsed = tuple(parsed) if isinstance(parsed, (list, tuple)) else (parsed,)
    return {key: parsed}


@dataclass(frozen=True)
class SweepRow:
    series: str
    axis: str
    value: float
    mode: str
    ue: str
    metric: str
    result: float
    config_hash: str


CSV_HEADER = ("series", "axis", "value", "mode", "ue", "metric", "result", "config_hash")


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.series, r.axis, repr(r.value), r.mode, r.ue, r.metric, repr(float(r.result)),
                    r.config_hash])
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8")


def _point_config(spec: SweepSpec, value) -> SystemConfig:
    if spec.axis == "symbol_index":
        return spec.scenario
    cast = int if spec.axis in ("m", "tau_c") else float
    try:
        return spec.scenario.replace(**{spec.axis: cast(value)})
    except InvalidConfigError as exc:
        raise InvalidSpecError(f"{spec.axis}={value}: {exc}") from exc


def _emit(spec: SweepSpec, value, mode: str, per_ue: np.ndarray, metric: str,
          cfg: SystemConfig) -> list[SweepRow]:
    h = cfg.config_hash()
    rows = [SweepRow(spec.label, spec.axis, float(value), mode, str(k), metric, float(x), h)
            for k, x in enumerate(per_ue)]
    rows.append(SweepRow(spec.label, spec.axis, float(value), mode, "sum", metric,
                         float(np.sum(per_ue)), h))
    return rows


def _mc_gamma(cfg: SystemConfig, ns: np.ndarray, spec: SweepSpec, workers: int = 1) -> np.ndarray:
    """Sample-estimated SINR ``(len(ns), K)``, interpolated from a strided symbol grid."""
    grid = np.unique(np.concatenate([ns[:: spec.mc_stride], ns[-1:]]))
    emp = empirical_terms(run_trials(cfg, spec.trials, spec.seed, grid, workers))
    v = emp.values
    g = v["i0"] / (v["i1"] + v["i2"] + v["i3"] + cfg.sigma_k_sq)
    return np.stack([np.interp(ns, grid, g[:, k]) for k in range(g.shape[1])], axis=1)


def _analytic_point(spec: SweepSpec, value) -> list[SweepRow]:
    cfg = _point_config(spec, value)
    if spec.axis == "symbol_index":
        ev = evaluate(cfg, [int(value)])
        return _emit(spec, value, "analytic", np.log2(1.0 + ev.gamma[0]), "rate_at_symbol", cfg)
    return _emit(spec, value, "analytic", evaluate(cfg).se_per_ue, "se", cfg)


def _mc_points(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    rows = []
    if spec.axis == "symbol_index":
        cfg = spec.scenario
        ns = np.array([int(v) for v in spec.values])
        emp = empirical_terms(run_trials(cfg, spec.trials, spec.seed, ns, workers))
        v = emp.values
        gamma = v["i0"] / (v["i1"] + v["i2"] + v["i3"] + cfg.sigma_k_sq)
        for s, value in enumerate(spec.values):
            rows += _emit(spec, value, "montecarlo", np.log2(1.0 + gamma[s]), "rate_at_symbol",
                          cfg)
        return rows
    for value in spec.values:
        cfg = _point_config(spec, value)
        ns = np.arange(1, cfg.tau_d + 1)
        gamma = _mc_gamma(cfg, ns, spec, workers)
        se = np.sum(np.log2(1.0 + gamma), axis=0) / cfg.tau_c
        rows += _emit(spec, value, "montecarlo", se, "se", cfg)
    return rows


def _analytic_job(args):
    spec, value = args
    return _analytic_point(spec, value)


def sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Evaluate a sweep; rows come back in axis order whatever ``workers`` is."""
    rows: list[SweepRow] = []
    if spec.mode in ("analytic", "both"):
        jobs = [(spec, v) for v in spec.values]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                parts = list(pool.map(_analytic_job, jobs))
        else:
            parts = [_analytic_job(j) for j in jobs]
        for part in parts:
            rows += part
    if spec.mode in ("montecarlo", "both"):
        rows += _mc_points(spec, workers)
    if spec.output_path:
        write_csv(rows, spec.output_path)
    return rows


# -- trend checks --------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class Anchor:
    name: str
    value: float
    reference: float

    @property
    def within_band(self) -> bool:
        return abs(self.value - self.reference) <= ANCHOR_BAND * abs(self.reference)


@dataclass(frozen=True, eq=False)
class TrendReport:
    figure: str
    checks: list[Check]
    anchors: list[Anchor]
    config_hash: str
    mode: str = "analytic"
    notes: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["figure", "kind", "name", "passed", "value", "reference", "detail",
                    "mode", "config_hash"])
        for c in self.checks:
            w.writerow([self.figure, "assert", c.name, int(c.passed), "", "", c.detail,
                        self.mode, self.config_hash])
        for a in self.anchors:
            w.writerow([self.figure, "report", a.name, int(a.within_band), repr(float(a.value)),
                        repr(a.reference), f"band +/-{int(ANCHOR_BAND * 100)}% (not asserted)",
                        self.mode, self.config_hash])
        if self.notes:
            w.writerow([self.figure, "note", "reading", "", "", "", self.notes, self.mode,
                        self.config_hash])
        return buf.getvalue()


def _series(rows: Sequence[SweepRow], series: str, mode: str, ue: str = "sum"):
    pts = [(r.value, r.result) for r in rows if r.series == series and r.mode == mode
           and r.ue == ue]
    if not pts:
        raise InvalidSpecError(f"missing sweep rows for series {series!r} ({mode})")
    pts.sort()
    return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])


def _assert_mode(rows: Sequence[SweepRow]) -> str:
    modes = {r.mode for r in rows}
    return "analytic" if "analytic" in modes else "montecarlo"


def _pct(new: float, old: float) -> float:
    return float(100.0 * (new - old) / old) if old else math.inf


def _fmt(xs) -> str:
    return " ".join(f"{x:.4g}" for x in xs)


# Figure 1: sum SE versus M (with/without EMI and aging) and versus kappa.

FIG1_M = (16, 64, 256, 1024)
FIG1_KAPPA = (1.0, 5.0, 10.0, 20.0)


def figure1_sweeps(base: SystemConfig | None = None, mode: str = "analytic", seed: int = 0,
                   trials: int = 500) -> list[SweepSpec]:
    base = base or SystemConfig()
    common = dict(mode=mode, seed=seed, trials=trials)
    return [
        SweepSpec("m", FIG1_M, base, label="emi", **common),
        SweepSpec("m", FIG1_M, base.replace(sigma_e_sq=0.0), label="no_emi", **common),
        SweepSpec("m", FIG1_M, base.replace(sigma_e_sq=0.0, fd_ts=0.0), label="no_emi_no_aging",
                  **common),
        SweepSpec("kappa_override", FIG1_KAPPA, base.replace(m=256), label="kappa", **common),
    ]


def figure1_trend_check(rows: Sequence[SweepRow], config_hash: str = "") -> TrendReport:
    mode = _assert_mode(rows)
    m, se_emi = _series(rows, "emi", mode)
    _, se_clean = _series(rows, "no_emi", mode)
    _, se_static = _series(rows, "no_emi_no_aging", mode)
    kap, se_kap = _series(rows, "kappa", mode)
    gap = se_clean - se_emi
    steps = np.diff(se_clean)
    i256 = int(np.flatnonzero(m == 256)[0]) if 256 in m else len(m) // 2
    checks = [
        Check("se_increasing_in_kappa", bool(np.all(np.diff(se_kap) > 0)),
              f"kappa={_fmt(kap)} se={_fmt(se_kap)}"),
        Check("no_emi_increments_shrink", bool(np.all(steps > 0) and np.all(np.diff(steps) < 0)),
              f"M={_fmt(m)} increments={_fmt(steps)}"),
        Check("emi_gap_positive_at_256", bool(gap[i256] > 0), f"gap={gap[i256]:.4g}"),
        Check("emi_gap_grows_with_m", bool(np.all(np.diff(gap) > 0)), f"gaps={_fmt(gap)}"),
        Check("emi_below_no_emi_at_max_m", bool(se_emi[-1] < se_clean[-1]),
              f"M={m[-1]:g}: {se_emi[-1]:.4g} < {se_clean[-1]:.4g}"),
    ]
    anchors = [
        Anchor("emi_loss_pct_at_m256", -_pct(se_emi[i256], se_clean[i256]), 8.0),
        Anchor("aging_loss_pct_at_m256", -_pct(se_clean[i256], se_static[i256]), 6.0),
    ]
    return TrendReport("fig1", checks, anchors, config_hash, mode)


# Figure 2: UE-averaged per-symbol rate versus symbol index.

FIG2_TAU_C = 400
FIG2_M = 64


def figure2_sweeps(base: SystemConfig | None = None, mode: str = "analytic", seed: int = 0,
                   trials: int = 500) -> list[SweepSpec]:
    base = (base or SystemConfig()).replace(m=FIG2_M, tau_c=FIG2_TAU_C)
    ns = tuple(range(1, base.tau_d + 1))
    common = dict(mode=mode, seed=seed, trials=trials)
    loud = base.rho_db - 20.0 if base.rho_db is not None else None
    out = []
    for fd in (0.0, 0.001, 0.002):
        cfg = base.replace(fd_ts=fd)
        out.append(SweepSpec("symbol_index", ns, cfg, label=f"fd{fd:g}", **common))
        if fd > 0:
            strong = cfg.replace(rho_db=loud) if loud is not None else cfg.replace(
                sigma_e_sq=cfg.emi_power() * 100.0)
            out.append(SweepSpec("symbol_index", ns, strong, label=f"fd{fd:g}_emi+20dB", **common))
    return out


def _first_zero(fd: float) -> float:
    return 2.404825557695773 / (2 * math.pi * fd)


def figure2_trend_check(rows: Sequence[SweepRow], config_hash: str = "",
                        block_se: dict[str, float] | None = None) -> TrendReport:
    """Asserts on the UE-averaged per-symbol rate inside the main Jakes lobe."""
    mode = _assert_mode(rows)
    k = len({r.ue for r in rows if r.ue != "sum"})
    avg = {}
    for label in ("fd0", "fd0.001", "fd0.002", "fd0.001_emi+20dB", "fd0.002_emi+20dB"):
        n, s = _series(rows, label, mode)
        avg[label] = s / k
    lobe = {fd: n <= _first_zero(fd) for fd in (0.001, 0.002)}
    checks = [
        Check("static_channel_flat", bool(np.ptp(avg["fd0"]) <= 1e-12 * max(avg["fd0"][0], 1.0)),
              f"spread={np.ptp(avg['fd0']):.3g}"),
    ]
    for fd, label in ((0.001, "fd0.001"), (0.002, "fd0.002")):
        seg = avg[label][lobe[fd]]
        checks.append(Check(f"rate_decreasing_in_n_fd{fd:g}", bool(np.all(np.diff(seg) < 0)),
                            f"n<={_first_zero(fd):.0f}: {seg[0]:.4g} -> {seg[-1]:.4g}"))
    both = lobe[0.002] & (n >= 2)
    rel1 = avg["fd0.001"][both] / avg["fd0.001"][0]
    rel2 = avg["fd0.002"][both] / avg["fd0.002"][0]
    checks.append(Check("faster_decay_for_larger_doppler", bool(np.all(rel2 < rel1)),
                        f"relative rate at n={int(n[both][-1])}: {rel2[-1]:.4g} < {rel1[-1]:.4g}"))
    for fd in ("0.001", "0.002"):
        clean, loud = avg[f"fd{fd}"], avg[f"fd{fd}_emi+20dB"]
        ok = np.where(clean > 1e-12, loud < clean, loud <= clean)
        checks.append(Check(f"emi_plus20dB_lowers_rate_fd{fd}", bool(np.all(ok)),
                            f"min margin={np.min(clean - loud):.3g}"))
    base = avg["fd0.002"]
    below = np.flatnonzero(base < 0.01 * base[0])
    n_drop = float(n[below[0]]) if below.size else math.inf
    anchors = [Anchor("symbol_where_rate_below_1pct_fd0.002", n_drop, 200.0)]
    if block_se:
        anchors.append(Anchor("se_loss_pct_emi_plus20dB",
                              -_pct(block_se["loud"], block_se["clean"]), 22.0))
    return TrendReport("fig2", checks, anchors, config_hash, mode,
                       notes="average SE read as the UE-averaged per-symbol log2(1+gamma_k[n])")


def figure2_block_se(base: SystemConfig | None = None) -> dict[str, float]:
    """Block sum SE at the reference M with and without a 20 dB EMI increase."""
    base = (base or SystemConfig()).replace(m=FIG2_M)
    loud = (base.replace(rho_db=base.rho_db - 20.0) if base.rho_db is not None
            else base.replace(sigma_e_sq=base.emi_power() * 100.0))
    return {"clean": evaluate(base).sum_se, "loud": evaluate(loud).sum_se}


# Figure 3: sum SE versus normalised Doppler for two element areas and block lengths.

FIG3_FD = (0.0, 0.0005, 0.001, 0.0015, 0.002, 0.0025, 0.003)
FIG3_M = 64


def figure3_sweeps(base: SystemConfig | None = None, mode: str = "analytic", seed: int = 0,
                   trials: int = 500) -> list[SweepSpec]:
    base = (base or SystemConfig()).replace(m=FIG3_M)
    common = dict(mode=mode, seed=seed, trials=trials)
    out = []
    for scale in (1.0, 4.0):
        for tau_c in (100, 200):
            cfg = base.replace(a_elem_scale=scale, tau_c=tau_c)
            out.append(SweepSpec("fd_ts", FIG3_FD, cfg, label=f"A{scale:g}_tc{tau_c}", **common))
    return out


def figure3_trend_check(rows: Sequence[SweepRow], config_hash: str = "") -> TrendReport:
    mode = _assert_mode(rows)
    fd, a1 = _series(rows, "A1_tc100", mode)
    _, a4 = _series(rows, "A4_tc100", mode)
    _, a1l = _series(rows, "A1_tc200", mode)
    _, a4l = _series(rows, "A4_tc200", mode)
    i0 = int(np.flatnonzero(fd == 0.0)[0])
    i2 = int(np.flatnonzero(np.isclose(fd, 0.002))[0])
    checks = [
        Check("se_increasing_in_area_tc100", bool(np.all(a4 > a1)), f"min gain={np.min(a4 - a1):.4g}"),
        Check("se_increasing_in_area_tc200", bool(np.all(a4l > a1l)),
              f"min gain={np.min(a4l - a1l):.4g}"),
        Check("longer_block_helps_static_channel", bool(a1l[i0] > a1[i0] and a4l[i0] > a4[i0]),
              f"A1: {a1l[i0]:.4g} > {a1[i0]:.4g}"),
    ]
    anchors = [
        Anchor("area_x4_gain_pct_fd0.002_tc100", _pct(a4[i2], a1[i2]), 116.0),
        Anchor("tc200_gain_pct_fd0.002_area_x4", _pct(a4l[i2], a4[i2]), 30.0),
    ]
    return TrendReport("fig3", checks, anchors, config_hash, mode)


def run_figure(which: str, base: SystemConfig | None = None, mode: str = "analytic",
               seed: int = 0, trials: int = 500, workers: int = 1):
    """Run every sweep of a figure and its trend check; returns ``(rows, report)``."""
    base = base or SystemConfig()
    makers = {"fig1": figure1_sweeps, "fig2": figure2_sweeps, "fig3": figure3_sweeps}
    if which not in makers:
        raise InvalidSpecError(f"unknown figure {which!r}")
    mode = "montecarlo" if mode == "mc" else mode
    rows: list[SweepRow] = []
    for spec in makers[which](base, mode, seed, trials):
        rows += sweep(spec, workers)
    h = base.config_hash()
    if which == "fig1":
        report = figure1_trend_check(rows, h)
    elif which == "fig2":
        report = figure2_trend_check(rows, h, figure2_block_se(base))
    else:
        report = figure3_trend_check(rows, h)
    return rows, report


def load_spec(path: str | Path, config_path: str | None = None,
              overrides: Sequence[str] = ()) -> SweepSpec:
    return SweepSpec.from_file(path, load_config(config_path, overrides))
