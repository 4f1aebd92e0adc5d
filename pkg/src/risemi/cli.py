"""Command-line entry point.

Examples::

    risemi --set m=256 --breakdown breakdown.csv
    risemi --dump-correlation R.csv --dump-stats stats.csv
    risemi validate --trials 100000 --seed 1 --tolerance 0.05 --out report.csv
    risemi sweep --spec sweep.txt
    risemi fig1 --mode analytic --out results/
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from risemi.analytics import evaluate
from risemi.config import InvalidConfigError, SystemConfig, load_config
from risemi.correlation import build_correlation
from risemi.estimation import estimation_stats
from risemi.experiments import InvalidSpecError, load_spec, run_figure, rows_to_csv, sweep
from risemi.montecarlo import validate

log = logging.getLogger("risemi")

STATS_COLUMNS = ("k", "xi_ck", "q", "sigma_e1_sq", "sigma_e2_sq", "sigma_e3_sq", "var_ghat_d",
                 "var_ghat_c")
BREAKDOWN_COLUMNS = ("k", "n", "i0", "i1", "i2", "i3", "i4", "zeta_sq", "gamma",
                     "se_contribution")


def _num(x) -> str:
    return repr(float(x))


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def correlation_csv(cfg: SystemConfig) -> str:
    corr = build_correlation(cfg.element_positions(), cfg.wavelength)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in corr.entries:
        w.writerow([_num(x) for x in row])
    return buf.getvalue()


def stats_csv(cfg: SystemConfig) -> str:
    corr = build_correlation(cfg.element_positions(), cfg.wavelength)
    stats = estimation_stats(cfg, cfg.large_scale(), corr)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for row in stats.rows():
        w.writerow([row["k"]] + [_num(row[c]) for c in STATS_COLUMNS[1:]])
    return buf.getvalue()


def breakdown_csv(cfg: SystemConfig) -> str:
    ev = evaluate(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BREAKDOWN_COLUMNS)
    for b in ev.breakdowns():
        w.writerow([b.k, b.n] + [_num(getattr(b, c)) for c in BREAKDOWN_COLUMNS[2:-1]]
                   + [_num(b.se_contribution)])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risemi", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value scenario file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--dump-correlation", metavar="PATH", help="write the RIS correlation matrix")
    p.add_argument("--dump-stats", metavar="PATH", help="write per-UE estimator statistics")
    p.add_argument("--breakdown", metavar="PATH", help="write per-(k, n) SINR terms")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    v = sub.add_parser("validate", help="closed forms against Monte Carlo")
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tolerance", type=float, default=0.05)
    v.add_argument("--symbols", type=int, nargs="+", default=[1, 50])
    v.add_argument("--no-alternates", action="store_true",
                   help="skip the informational alternate-reading rows")
    v.add_argument("--out", default="-", help="report CSV path (default stdout)")

    s = sub.add_parser("sweep", help="run a sweep spec file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", help="CSV path (overrides output_path in the spec)")

    for name in ("fig1", "fig2", "fig3"):
        f = sub.add_parser(name, help=f"sweeps and trend checks for {name}")
        f.add_argument("--mode", choices=("analytic", "mc", "both"), default="analytic")
        f.add_argument("--seed", type=int, default=0)
        f.add_argument("--trials", type=int, default=500, help="Monte-Carlo blocks per point")
        f.add_argument("--out", default=".", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.set)
    except (InvalidConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.dump_correlation:
        _write(correlation_csv(cfg), args.dump_correlation)
    if args.dump_stats:
        _write(stats_csv(cfg), args.dump_stats)
    if args.breakdown:
        _write(breakdown_csv(cfg), args.breakdown)

    if args.command is None:
        if not (args.dump_correlation or args.dump_stats or args.breakdown):
            ev = evaluate(cfg)
            per_ue = " ".join(f"{x:.4f}" for x in ev.se_per_ue)
            print(f"sum SE {ev.sum_se:.6f} bit/s/Hz (per UE: {per_ue}) config {cfg.config_hash()}")
        return 0

    if args.command == "validate":
        report, _ = validate(cfg, trials=args.trials, seed=args.seed, symbols=args.symbols,
                             tolerance=args.tolerance, workers=args.workers,
                             alternates=not args.no_alternates)
        _write(report.to_csv(), args.out)
        for r in report.rows:
            if r.counted and not r.passed:
                log.warning("%s k=%d n=%d gap %+.3f", r.term, r.k, r.n, r.rel_gap)
        return 0 if report.passed else 1

    if args.command == "sweep":
        try:
            spec = load_spec(args.spec, args.config, args.set)
        except (InvalidSpecError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        rows = sweep(spec, args.workers)
        if args.out or not spec.output_path:
            _write(rows_to_csv(rows), args.out or "-")
        return 0

    rows, report = run_figure(args.command, cfg, args.mode, args.seed, args.trials, args.workers)
    out = Path(args.out)
    _write(rows_to_csv(rows), str(out / f"{args.command}.csv"))
    _write(report.to_csv(), str(out / f"{args.command}_trends.csv"))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {args.command} {c.name}: {c.detail}")
    for a in report.anchors:
        print(f"REPORT {args.command} {a.name}: {a.value:.4g} (reference {a.reference:g})")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
