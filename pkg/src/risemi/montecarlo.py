"""Monte-Carlo engine: end-to-end simulation of training, aging and MRT downlink.

Every trial draws one coherence block (channels, RIS phases), estimates the
channels from noisy pilots with EMI at the RIS, ages the true channels to the
requested symbols and records the coefficients that make up the SINR. The
closed forms in :mod:`risemi.analytics` are never consulted here; only the
estimator shrinkage coefficients are shared, because the receiver needs them.

Random streams: trials are grouped in fixed-size chunks and chunk ``c`` draws
from ``SeedSequence(seed, spawn_key=(c,))``. Chunks are always generated in
full and truncated, so adding trials never changes earlier ones, and the
result does not depend on how many worker processes run the chunks.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from risemi.analytics import Evaluation, evaluate, zeta_sq_deterministic
from risemi.channels import AgingProfile, gen_bs_ris
from risemi.config import SystemConfig
from risemi.correlation import (
    CorrelationMatrix,
    InvalidInputError,
    build_correlation,
    complex_normal,
)
from risemi.estimation import (
    EstimationStats,
    build_pilots,
    despread,
    estimation_stats,
    mmse_direct,
    receive_pilot_direct,
)

CHUNK_SIZE = 500
TERMS = ("i0", "i1", "i2", "i3")


class InsufficientDataError(ValueError):
    """Raised when fewer than two trials are available for a sample statistic."""


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    """Coefficient samples for a batch of trials.

    Arrays have a leading trial axis ``T`` and a symbol axis ``S``:

    ``gains[t, s, k, j]``
        ``G_k[n] Gbar_j[n]^H`` before the precoder scaling, so that
        ``G_k f_j = zeta * gains[..., k, j]``.
    ``error_gains[t, s, k, j]``
        Same with ``G_k`` replaced by its aged estimation error ``G_k - Gbar_k``.
    ``emi[t, s, k]``
        ``g_r,k[n]^H Phi^H u`` for a fresh EMI draw ``u``.
    ``zeta_sq[t, s]``
        Per-realization precoder normalisation ``p_t / tr(Gbar Gbar^H)``.
    """

    n: np.ndarray
    gains: np.ndarray
    error_gains: np.ndarray
    emi: np.ndarray
    zeta_sq: np.ndarray

    @property
    def trials(self) -> int:
        return self.gains.shape[0]

    @property
    def desired(self) -> np.ndarray:
        """``G_k[n] f_k[n]`` samples, ``(T, S, K)``."""
        return np.sqrt(self.zeta_sq)[..., None] * np.diagonal(self.gains, axis1=-2, axis2=-1)

    @property
    def cross(self) -> np.ndarray:
        """``G_k[n] f_j[n]`` samples, ``(T, S, K, K)``; the diagonal is the desired signal."""
        return np.sqrt(self.zeta_sq)[..., None, None] * self.gains

    def __len__(self) -> int:
        return self.trials

    @staticmethod
    def concatenate(parts: list[TrialOutcome]) -> TrialOutcome:
        if not parts:
            raise InsufficientDataError("no outcomes to concatenate")
        return TrialOutcome(
            n=parts[0].n,
            gains=np.concatenate([p.gains for p in parts]),
            error_gains=np.concatenate([p.error_gains for p in parts]),
            emi=np.concatenate([p.emi for p in parts]),
            zeta_sq=np.concatenate([p.zeta_sq for p in parts]),
        )

    def head(self, count: int) -> TrialOutcome:
        return TrialOutcome(self.n, self.gains[:count], self.error_gains[:count],
                            self.emi[:count], self.zeta_sq[:count])


# -- simulation ----------------------------------------------------------------------

def _correlated(scale, corr: CorrelationMatrix, rng, shape) -> np.ndarray:
    """``CN(0, scale*R)`` vectors along the last axis; ``scale`` broadcasts over ``shape``."""
    w = complex_normal(rng, (*shape, corr.m))
    return np.sqrt(np.asarray(scale))[..., None] * (w @ corr.factor.T)


def simulate_block(cfg: SystemConfig, symbols, rng: np.random.Generator, batch: int,
                   *, stats: EstimationStats | None = None,
                   corr: CorrelationMatrix | None = None) -> TrialOutcome:
    """Simulate ``batch`` independent coherence blocks and record coefficients at ``symbols``.

    Cascade training observes each element's cascade ``g_br,m g_r,km`` once per
    UE, together with the residual direct error, EMI reflected by the panel and
    receiver noise. Only the combination ``Ghat_ck v`` enters the precoder, so
    the per-element observations are summed against ``v`` in closed form: the
    sum of ``M`` independent unit-modulus-weighted Gaussian terms is drawn as a
    single Gaussian with ``M`` times the variance.
    """
    ns = np.atleast_1d(np.asarray(symbols, dtype=int))
    if np.any(ns < 0):
        raise InvalidInputError("symbol indices must be nonnegative")
    ls = cfg.large_scale()
    m, n_t, k_ue = cfg.m, cfg.n_t, cfg.k_ue
    if corr is None:
        corr = build_correlation(cfg.element_positions(), cfg.wavelength)
    if stats is None:
        stats = estimation_stats(cfg, ls, corr)
    a = cfg.a_elem
    p = cfg.p_tau_p
    sigma_e_sq = cfg.emi_power(ls.beta_br)
    beta_d = ls.beta_d
    beta_r = ls.beta_r
    pilots = build_pilots(cfg.tau_p, k_ue)

    # block-start channels
    g_d = np.sqrt(beta_d) * complex_normal(rng, (batch, n_t, k_ue))
    if m:
        nlos = a if cfg.cascade_nlos_weight == "area" else 1.0
        g_br = gen_bs_ris(ls.beta_br, ls.kappa, cfg.los_phase_matrix(), rng, size=batch,
                          nlos_scale=nlos)
        g_r = _correlated(a * beta_r, corr, rng, (batch, k_ue))  # (B, K, M)
        v = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(batch, m)))
    else:
        g_br = np.zeros((batch, n_t, 0), complex)
        g_r = np.zeros((batch, k_ue, 0), complex)
        v = np.zeros((batch, 0), complex)

    # direct-link training
    y_d = receive_pilot_direct(g_d, pilots, p, cfg.sigma_d_sq, rng)
    ghat_d = np.empty_like(g_d)
    for k in range(k_ue):
        ghat_d[..., k] = mmse_direct(despread(y_d, pilots.pilot(k), p), beta_d[k],
                                     cfg.sigma_d_sq, p)

    # cascade training, folded against v
    if m:
        sum_v = v.sum(axis=-1)  # (B,)
        residual = (g_d - ghat_d) * sum_v[:, None, None]
        through = np.einsum("bnm,bkm->bnk", g_br * v[:, None, :], g_r)
        if sigma_e_sq > 0:
            emi_in = _correlated(a * sigma_e_sq * m, corr, rng, (batch, k_ue))
            emi_ul = np.einsum("bnm,bkm->bnk", g_br * v[:, None, :], emi_in)
        else:
            emi_ul = 0.0
        noise = np.sqrt(m * cfg.sigma_c_sq / p) * complex_normal(rng, (batch, n_t, k_ue))
        ghat_cv = stats.shrink_c * (residual + through + emi_ul + noise)
    else:
        ghat_cv = np.zeros_like(g_d)

    # downlink at each requested symbol
    profile = AgingProfile(cfg.fd_ts)
    s_count = ns.size
    gains = np.empty((batch, s_count, k_ue, k_ue), complex)
    error_gains = np.empty_like(gains)
    emi = np.zeros((batch, s_count, k_ue), complex)
    zeta_sq = np.empty((batch, s_count))
    for idx, n in enumerate(ns):
        r0 = float(profile.rho0(n))
        r1 = float(profile.rho1(n))
        g_d_n = r0 * g_d + profile.complement(r0) * np.sqrt(beta_d) * complex_normal(
            rng, g_d.shape)
        h = g_d_n
        if m:
            innov = _correlated(a * beta_r, corr, rng, (batch, k_ue))
            g_r_n = r1 * g_r + profile.complement(r1) * innov
            h = h + np.einsum("bnm,bkm->bnk", g_br * v[:, None, :], g_r_n)
        gbar = r0 * ghat_d + r1 * ghat_cv  # columns are Gbar_k^H
        trace = np.sum(np.abs(gbar) ** 2, axis=(1, 2))
        zeta_sq[:, idx] = cfg.p_t / trace
        gains[:, idx] = np.einsum("bnk,bnj->bkj", h.conj(), gbar)
        error_gains[:, idx] = np.einsum("bnk,bnj->bkj", (h - gbar).conj(), gbar)
        if m and sigma_e_sq > 0:
            u = _correlated(a * sigma_e_sq, corr, rng, (batch,))
            emi[:, idx] = np.einsum("bkm,bm->bk", g_r_n.conj(), v.conj() * u)
    return TrialOutcome(n=ns, gains=gains, error_gains=error_gains, emi=emi, zeta_sq=zeta_sq)


def run_trial(cfg: SystemConfig, stats: EstimationStats | None = None, seed: int = 0,
              symbols=(1,)) -> TrialOutcome:
    """One trial from its own stream ``default_rng(seed)``."""
    return simulate_block(cfg, symbols, np.random.default_rng(seed), 1, stats=stats)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _run_chunk(args) -> TrialOutcome:
    cfg, symbols, seed, chunk, corr = args
    return simulate_block(cfg, symbols, _chunk_rng(seed, chunk), CHUNK_SIZE, corr=corr)


def run_trials(cfg: SystemConfig, trials: int, seed: int = 0, symbols=(1,),
               workers: int = 1) -> TrialOutcome:
    """Run ``trials`` independent blocks; identical output for any ``workers``."""
    if trials < 1:
        raise InsufficientDataError("need at least one trial")
    corr = build_correlation(cfg.element_positions(), cfg.wavelength)
    chunks = math.ceil(trials / CHUNK_SIZE)
    jobs = [(cfg, tuple(np.atleast_1d(symbols).tolist()), seed, c, corr) for c in range(chunks)]
    if workers > 1 and chunks > 1:
        with ProcessPoolExecutor(max_workers=min(workers, chunks)) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return TrialOutcome.concatenate(parts).head(trials)


# -- sample statistics ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalTerms:
    """Sample estimates of I0..I3, ``(S, K)`` each, with standard errors.

    ``det_zeta`` holds the same estimates with the per-realization precoder
    scaling replaced by a supplied deterministic ``zeta^2`` (when given).
    ``diagnostics`` holds the error-only interference powers
    ``E|zeta (G_k - Gbar_k) Gbar_j^H|^2`` (``i1_err`` for ``j = k``,
    ``i2_err`` summed over ``j != k``).
    """

    n: np.ndarray
    values: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    trials: int
    det_zeta: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)


def _mean_and_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = x.shape[0]
    return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(t)


def _moments(desired: np.ndarray, cross_power: np.ndarray, emi_power: np.ndarray):
    t = desired.shape[0]
    mu, se_mu = _mean_and_se(desired)
    i0 = np.abs(mu) ** 2
    se_i0 = 2 * np.abs(mu) * se_mu
    dev = np.abs(desired - mu) ** 2
    i1 = dev.sum(axis=0) / (t - 1)
    se_i1 = np.sqrt(np.maximum((dev**2).mean(axis=0) - dev.mean(axis=0) ** 2, 0.0) / t)
    i2, se_i2 = _mean_and_se(cross_power)
    i3, se_i3 = _mean_and_se(emi_power)
    return ({"i0": i0, "i1": i1, "i2": i2, "i3": i3},
            {"i0": se_i0, "i1": se_i1, "i2": se_i2, "i3": se_i3})


def _off_diagonal_power(x: np.ndarray) -> np.ndarray:
    k = x.shape[-1]
    return np.sum(np.abs(x) ** 2 * (1.0 - np.eye(k)), axis=-1)


def empirical_terms(outcome: TrialOutcome | list[TrialOutcome],
                    zeta_sq_det: np.ndarray | None = None) -> EmpiricalTerms:
    """Sample estimates: ``I0 = |mean(G_k f_k)|^2``, ``I1 = var(G_k f_k)``,
    ``I2 = sum_{j != k} mean |G_k f_j|^2``, ``I3 = mean |EMI|^2``."""
    if isinstance(outcome, list):
        outcome = TrialOutcome.concatenate(outcome)
    if outcome.trials < 2:
        raise InsufficientDataError("at least two trials are needed for sample statistics")
    emi_power = np.abs(outcome.emi) ** 2
    values, stderr = _moments(outcome.desired, _off_diagonal_power(outcome.cross), emi_power)
    zeta = np.sqrt(outcome.zeta_sq)[..., None, None]
    diag = {
        "i1_err": np.mean(np.abs(np.diagonal(zeta * outcome.error_gains, axis1=-2, axis2=-1)) ** 2,
                          axis=0),
        "i2_err": np.mean(_off_diagonal_power(zeta * outcome.error_gains), axis=0),
    }
    det = {}
    if zeta_sq_det is not None:
        z = np.sqrt(np.asarray(zeta_sq_det, dtype=float))[None, :, None, None]
        scaled = z * outcome.gains
        det, _ = _moments(np.diagonal(scaled, axis1=-2, axis2=-1),
                          _off_diagonal_power(scaled), emi_power)
        det_err = z * outcome.error_gains
        diag["i1_err_det_zeta"] = np.mean(
            np.abs(np.diagonal(det_err, axis1=-2, axis2=-1)) ** 2, axis=0)
        diag["i2_err_det_zeta"] = np.mean(_off_diagonal_power(det_err), axis=0)
    return EmpiricalTerms(n=outcome.n, values=values, stderr=stderr, trials=outcome.trials,
                          det_zeta=det, diagnostics=diag)


# -- comparison ----------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    term: str
    k: int
    n: int
    analytic: float
    empirical: float
    stderr: float
    rel_gap: float
    empirical_det_zeta: float
    rel_gap_det_zeta: float
    passed: bool
    note: str = ""
    counted: bool = True  # False for informational rows (alternate readings, diagnostics)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    rows: list[ComparisonRow]
    trials: int
    seed: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.counted)

    def term_passed(self, term: str) -> bool:
        return all(r.passed for r in self.rows if r.term == term)

    def worst_gap(self, term: str) -> float:
        return max(abs(r.rel_gap) for r in self.rows if r.term == term)

    def extend(self, rows) -> ComparisonReport:
        return ComparisonReport(self.rows + list(rows), self.trials, self.seed, self.tolerance)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "k", "n", "analytic", "empirical", "stderr", "rel_gap",
                    "empirical_det_zeta", "rel_gap_det_zeta", "pass", "counted", "note",
                    "trials", "seed"])
        for r in self.rows:
            w.writerow([r.term, r.k, r.n, repr(float(r.analytic)), repr(float(r.empirical)),
                        repr(float(r.stderr)), repr(float(r.rel_gap)),
                        repr(float(r.empirical_det_zeta)), repr(float(r.rel_gap_det_zeta)),
                        int(r.passed), int(r.counted), r.note, self.trials, self.seed])
        return buf.getvalue()


def _rel(emp: float, ana: float) -> float:
    if ana == 0:
        return 0.0 if emp == 0 else math.inf
    return (emp - ana) / ana


def _analytic_terms(ev: Evaluation) -> dict[str, np.ndarray]:
    return {"i0": ev.i0, "i1": ev.i1, "i2": ev.i2, "i3": ev.i3}


def compare_terms(analytic: dict[str, np.ndarray], empirical: dict[str, np.ndarray],
                  n, *, tolerance: float = 0.05, stderr: dict | None = None,
                  det_zeta: dict | None = None, label: str = "", counted: bool = True,
                  terms=None) -> list[ComparisonRow]:
    """Rows comparing matching ``(S, K)`` arrays term by term."""
    rows = []
    for term in terms or analytic:
        ana, emp = np.asarray(analytic[term]), np.asarray(empirical[term])
        if ana.shape != emp.shape:
            raise InvalidInputError(f"shape mismatch for {term}: {ana.shape} vs {emp.shape}")
        for s, sym in enumerate(np.atleast_1d(n)):
            for k in range(ana.shape[1]):
                a, e = float(ana[s, k]), float(emp[s, k])
                gap = _rel(e, a)
                e_det = float(det_zeta[term][s, k]) if det_zeta else math.nan
                gap_det = _rel(e_det, a) if det_zeta else math.nan
                ok = abs(gap) <= tolerance
                note = ""
                if not ok and abs(gap_det) <= tolerance:
                    note = "precoder normalisation gap"
                se = float(stderr[term][s, k]) if stderr else math.nan
                rows.append(ComparisonRow(term + label, k, int(sym), a, e, se, gap, e_det,
                                          gap_det, ok, note, counted))
    return rows


def compare(analytic: Evaluation, empirical: EmpiricalTerms, *, tolerance: float = 0.05,
            seed: int = 0) -> ComparisonReport:
    """Relative gaps per term, UE and symbol, with pass/fail against ``tolerance``.

    A failing row whose deterministic-``zeta`` estimate is within tolerance is
    annotated as a precoder-normalisation gap.
    """
    if not np.array_equal(np.asarray(analytic.n), np.asarray(empirical.n)):
        raise InvalidInputError(f"symbol mismatch: {analytic.n} vs {empirical.n}")
    rows = compare_terms(_analytic_terms(analytic), empirical.values, empirical.n,
                         tolerance=tolerance, stderr=empirical.stderr,
                         det_zeta=empirical.det_zeta or None, terms=TERMS)
    return ComparisonReport(rows=rows, trials=empirical.trials, seed=seed, tolerance=tolerance)


def validate(cfg: SystemConfig, trials: int = 100_000, seed: int = 0, symbols=(1, 50),
             tolerance: float = 0.05, workers: int = 1,
             alternates: bool = True) -> tuple[ComparisonReport, EmpiricalTerms]:
    """Closed forms against Monte Carlo at ``symbols``.

    The EMI term is compared with its phase-averaged closed form because every
    trial draws its own panel. With ``alternates`` the report also carries
    informational rows (not counted towards pass/fail) for the other
    interference-term reading, for the other cascade NLoS weighting (a second
    simulation), and for the error-only interference diagnostics.
    """
    ev = evaluate(cfg, symbols)
    outcome = run_trials(cfg, trials, seed, symbols, workers)
    emp = empirical_terms(outcome, zeta_sq_det=ev.zeta_sq)
    report = compare(ev, emp, tolerance=tolerance, seed=seed)
    if not alternates:
        return report, emp
    extra = []
    other = "symmetric" if cfg.i2_variant == "printed" else "printed"
    ev_other = evaluate(cfg.replace(i2_variant=other), symbols)
    extra += compare_terms({"i2": ev_other.i2}, emp.values, emp.n, tolerance=tolerance,
                           stderr=emp.stderr, det_zeta=emp.det_zeta, label=f"[{other}]",
                           counted=False)
    diag_ana = {"i1_err": ev.i1, "i2_err": ev.i2}
    diag_emp = {"i1_err": emp.diagnostics["i1_err"], "i2_err": emp.diagnostics["i2_err"]}
    diag_det = {"i1_err": emp.diagnostics["i1_err_det_zeta"],
                "i2_err": emp.diagnostics["i2_err_det_zeta"]}
    extra += compare_terms(diag_ana, diag_emp, emp.n, tolerance=tolerance, det_zeta=diag_det,
                           counted=False)
    weight = "unit" if cfg.cascade_nlos_weight == "area" else "area"
    cfg_w = cfg.replace(cascade_nlos_weight=weight)
    ev_w = evaluate(cfg_w, symbols)
    emp_w = empirical_terms(run_trials(cfg_w, trials, seed, symbols, workers),
                            zeta_sq_det=ev_w.zeta_sq)
    extra += compare_terms(_analytic_terms(ev_w), emp_w.values, emp_w.n, tolerance=tolerance,
                           stderr=emp_w.stderr, det_zeta=emp_w.det_zeta,
                           label=f"[nlos={weight}]", counted=False, terms=TERMS)
    return report.extend(extra), emp


def monte_carlo_se(cfg: SystemConfig, trials: int, seed: int = 0, workers: int = 1) -> np.ndarray:
    """Per-UE SE from sample estimates of every SINR term over ``1..tau_d``."""
    ns = np.arange(1, cfg.tau_d + 1)
    emp = empirical_terms(run_trials(cfg, trials, seed, ns, workers))
    v = emp.values
    gamma = v["i0"] / (v["i1"] + v["i2"] + v["i3"] + cfg.sigma_k_sq)
    return np.sum(np.log2(1.0 + gamma), axis=0) / cfg.tau_c


def deterministic_zeta_sq(cfg: SystemConfig, symbols) -> np.ndarray:
    stats = estimation_stats(cfg, cfg.large_scale(),
                             build_correlation(cfg.element_positions(), cfg.wavelength))
    return zeta_sq_deterministic(stats, AgingProfile(cfg.fd_ts), np.atleast_1d(symbols),
                                 cfg.n_t, cfg.m, cfg.p_t)
