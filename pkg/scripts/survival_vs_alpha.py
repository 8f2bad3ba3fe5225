"""Simulated survival against the fixed-point prediction (2b-1)/b along an alpha ladder."""
import argparse

import numpy as np

from branchwalk.chains import load_chain
from branchwalk.criticality import analyze, survival_probability
from branchwalk.montecarlo import SimConfig, estimate_survival

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--chain", default='{"kind": "biased_walk_z", "p": 0.5}')
    ap.add_argument("--alphas", type=float, nargs="+", default=list(np.round(np.linspace(0.8, 0.99, 8), 4)))
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    chain = load_chain(args.chain)
    an = analyze(chain, 2000)
    print(f"alpha_c = {an.report.alpha_c}")
    print(f"{'alpha':>7} {'mu':>8} {'predicted':>10} {'simulated':>10} {'wilson':>20}")
    for a in args.alphas:
        ev = an.mu(a)
        pred = survival_probability(ev.F) if ev.F < 1 else float("nan")
        est = estimate_survival(SimConfig(chain, a, trials=args.trials, seed=args.seed), workers=args.workers)
        lo, hi = est.wilson_interval
        print(f"{a:7.4f} {ev.mu:8.4f} {pred:10.4f} {est.survived_fraction:10.4f}   [{lo:.4f}, {hi:.4f}]")
