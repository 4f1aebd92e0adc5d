"""Regenerate the CSVs and trend reports for all three SE figures.

Usage: python scripts/run_figures.py [--mode analytic|mc|both] [--trials N] [--out DIR]
"""

import argparse
import sys

from risemi.cli import main


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mode", default="analytic", choices=("analytic", "mc", "both"))
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results")
    return p.parse_args()


if __name__ == "__main__":
    args = parse()
    status = 0
    for fig in ("fig1", "fig2", "fig3"):
        status |= main(["--workers", str(args.workers), fig, "--mode", args.mode,
                        "--trials", str(args.trials), "--seed", str(args.seed),
                        "--out", args.out])
    sys.exit(status)
