"""Sweep (p, alpha) for the walk on Z and write phase.csv / phase.json.

    python3 scripts/phase_diagram.py --out runs/phase --trials 500 --seed 1
"""
import argparse
import sys
from pathlib import Path

from branchwalk.cli import main


def parse():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/phase")
    ap.add_argument("--trials", type=int, default=0, help="Monte Carlo trials per cell")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    return ap.parse_args()


if __name__ == "__main__":
    a = parse()
    Path(a.out).mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "phase", "--p-range", "0.05", "0.95", "--grid-steps", "19",
        "--alpha-range", "0.80", "0.99", "--alpha-steps", "20",
        "--trials", str(a.trials), "--seed", str(a.seed), "--workers", str(a.workers), "--out", a.out,
    ]))
