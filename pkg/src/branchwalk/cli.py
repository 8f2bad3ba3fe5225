"""Command-line entry point: ``branchwalk {returns,alpha-c,simulate,phase,offspring}``.

Structured results go to stdout as JSON, progress to stderr.  Exit codes:
0 success, 2 bad input, 3 resource budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chains import (
    ChainError,
    SimpleWalkZd,
    chain_to_dict,
    exact_return_beta,
    load_chain,
    make_biased_walk,
)
from .criticality import BracketFailure, analyze
from .montecarlo import SimConfig, estimate_survival, sample_offspring_counts
from .series import (
    BudgetExceeded,
    beta_from_f,
    compute_series,
    default_tails,
    fmt17,
    green_sum,
    write_series_csv,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BUDGET = 3


class UsageError(Exception):
    pass


def default_n_max(chain) -> int:
    if isinstance(chain, SimpleWalkZd):
        return {1: 2000, 2: 200, 3: 60, 4: 30}[chain.d]
    return 2000


def _num(x):
    """JSON-safe float: infinities become the string 'inf'."""
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, argv, chain, n_max, seed, outputs: list[Path]) -> Path:
    manifest = {
        "command": list(argv),
        "chain": chain_to_dict(chain) if chain is not None else None,
        "n_max": n_max,
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out / "manifest.json"
    path.write_text(_dump(manifest) + "\n")
    return path


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chain(args):
    if args.chain is None:
        raise UsageError("--chain is required")
    return load_chain(args.chain)


def _n_max(args, chain) -> int:
    n = args.n_max if args.n_max is not None else default_n_max(chain)
    if n < 1:
        raise UsageError("--n-max must be >= 1")
    return n


def _seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required")
    return args.seed


def _prob(x: float, name: str, lo_open=False) -> float:
    if not (0.0 < x <= 1.0 if lo_open else 0.0 <= x <= 1.0):
        raise UsageError(f"{name} out of range: {x}")
    return x


# --- returns -------------------------------------------------------------------


def cmd_returns(args, argv) -> int:
    chain = _chain(args)
    n_max = _n_max(args, chain)
    out = _out_dir(args) or Path(".")
    _log(f"computing return series to n={n_max}")
    series = compute_series(chain, n_max)
    p_tail, f_tail = default_tails(series)
    beta = beta_from_f(series, f_tail)
    green = green_sum(series, p_tail)
    csv_path = out / "returns.csv"
    write_series_csv(series, csv_path)
    sidecar = {
        **beta.to_dict(),
        "G": _num(green.G),
        "verdict": green.verdict,
        "beta_tilde": green.beta_tilde,
        "exact_beta": exact_return_beta(chain),
        "n_max": n_max,
        "tails": {"p": _tail_dict(p_tail), "f": _tail_dict(f_tail)},
    }
    json_path = out / "returns.json"
    json_path.write_text(_dump(sidecar) + "\n")
    write_manifest(out, argv, chain, n_max, None, [csv_path, json_path])
    print(_dump(sidecar))
    return EXIT_OK


def _tail_dict(tail) -> dict:
    d = {"kind": tail.kind, "target": tail.target}
    if tail.kind == "power_law":
        d.update(exponent=tail.exponent, coefficient=tail.coefficient)
    elif tail.kind == "geometric":
        d.update(ratio=tail.ratio, coefficient=tail.coefficient, prefactor_exponent=tail.prefactor_exponent)
    if tail.kind != "none":
        d.update(
            fit_window=list(tail.fit_window),
            quality=tail.quality,
            tail_mass=_num(tail.tail_mass),
            uncertainty=_num(tail.uncertainty),
        )
    return d


# --- alpha-c -------------------------------------------------------------------


def cmd_alpha_c(args, argv) -> int:
    chain = _chain(args)
    n_max = _n_max(args, chain)
    analysis = analyze(chain, n_max, use_exact_beta=not args.numeric_beta)
    report = analysis.report.to_dict()
    print(_dump(report))
    out = _out_dir(args)
    if out is not None:
        path = out / "alpha_c.json"
        path.write_text(_dump(report) + "\n")
        write_manifest(out, argv, chain, n_max, None, [path])
    return EXIT_OK


# --- simulate ------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    chain = _chain(args)
    seed = _seed(args)
    alpha = _prob(args.alpha, "--alpha", lo_open=True)
    config = SimConfig(
        chain=chain,
        alpha=alpha,
        trials=args.trials,
        seed=seed,
        max_steps_per_individual=args.max_steps,
        birth_cap=args.birth_cap,
        time_horizon=args.horizon,
    )
    _log(f"simulating {config.trials} trials at alpha={alpha} on {args.workers} worker(s)")
    if args.trial_log:
        with open(args.trial_log, "w") as fh:
            est = estimate_survival(config, workers=args.workers, trial_log=fh)
    else:
        est = estimate_survival(config, workers=args.workers)
    result = {"alpha": alpha, "chain": chain_to_dict(chain), "seed": seed, **est.to_dict()}
    print(_dump(result))
    out = _out_dir(args)
    if out is not None:
        path = out / "simulate.json"
        path.write_text(_dump(result) + "\n")
        write_manifest(out, argv, chain, None, seed, [path])
    return EXIT_OK


# --- phase ---------------------------------------------------------------------


@dataclass
class PhaseGrid:
    p_values: list[float]
    alpha_values: list[float]
    beta: list[float] = field(default_factory=list)
    regime: list[str] = field(default_factory=list)
    marginal: list[bool] = field(default_factory=list)
    alpha_c: list[float | None] = field(default_factory=list)
    cells: list[list[dict]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p_values": self.p_values,
            "alpha_values": self.alpha_values,
            "rows": [
                {
                    "p": p,
                    "beta": self.beta[i],
                    "regime": self.regime[i],
                    "marginal": self.marginal[i],
                    "alpha_c": self.alpha_c[i],
                    "cells": self.cells[i],
                }
                for i, p in enumerate(self.p_values)
            ],
        }


def grid(lo: float, hi: float, steps: int) -> list[float]:
    # rounded so that decimal grid points (0.25, 0.75) land exactly
    return [round(float(x), 12) for x in np.linspace(lo, hi, steps)]


def cell_seed(seed: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence([seed, i, j]).generate_state(1, np.uint64)[0])


def phase_grid(
    p_values,
    alpha_values,
    n_max: int = 2000,
    trials: int = 0,
    seed: int = 0,
    birth_cap: int = 10**4,
    workers: int = 1,
) -> PhaseGrid:
    """Classify each walk parameter p and evaluate mu (and optionally
    simulated survival) at every (p, alpha) cell."""
    pg = PhaseGrid(list(p_values), list(alpha_values))
    for i, p in enumerate(pg.p_values):
        chain = make_biased_walk(p)
        analysis = analyze(chain, n_max, use_exact_beta=True)
        report = analysis.report
        pg.beta.append(report.beta.value)
        pg.regime.append(report.regime.value)
        pg.marginal.append(report.marginal)
        pg.alpha_c.append(report.alpha_c)
        row = []
        for j, a in enumerate(pg.alpha_values):
            cell = {"alpha": a, "mu": _num(analysis.mu(a).mu), "regime": report.regime.value}
            if trials > 0:
                config = SimConfig(chain, a, trials=trials, seed=cell_seed(seed, i, j), birth_cap=birth_cap)
                est = estimate_survival(config, workers=workers)
                cell["mc_survival"] = est.survived_fraction
                cell["mc_censored"] = est.censored_fraction
            row.append(cell)
        pg.cells.append(row)
        _log(f"p={p}: regime={report.regime.value} alpha_c={report.alpha_c}")
    return pg


def write_phase_csv(pg: PhaseGrid, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "alpha", "beta", "regime", "marginal", "alpha_c", "mu", "mc_survival"])
        for i, p in enumerate(pg.p_values):
            ac = pg.alpha_c[i]
            for cell in pg.cells[i]:
                mu = cell["mu"]
                mc = cell.get("mc_survival")
                w.writerow([
                    fmt17(p),
                    fmt17(cell["alpha"]),
                    fmt17(pg.beta[i]),
                    pg.regime[i],
                    int(pg.marginal[i]),
                    "" if ac is None else fmt17(ac),
                    mu if isinstance(mu, str) else fmt17(mu),
                    "" if mc is None else fmt17(mc),
                ])


def cmd_phase(args, argv) -> int:
    p_lo, p_hi = args.p_range
    a_lo, a_hi = args.alpha_range
    for x, name in ((p_lo, "--p-range"), (p_hi, "--p-range")):
        _prob(x, name)
    for x, name in ((a_lo, "--alpha-range"), (a_hi, "--alpha-range")):
        _prob(x, name, lo_open=True)
    if p_lo > p_hi or a_lo > a_hi:
        raise UsageError("ranges must be increasing")
    if args.grid_steps < 2:
        raise UsageError("--grid-steps must be >= 2")
    a_steps = args.alpha_steps or args.grid_steps
    if a_steps < 2:
        raise UsageError("--alpha-steps must be >= 2")
    if args.trials > 0:
        _seed(args)
    n_max = args.n_max or 2000
    pg = phase_grid(
        grid(p_lo, p_hi, args.grid_steps),
        grid(a_lo, a_hi, a_steps),
        n_max=n_max,
        trials=args.trials,
        seed=args.seed or 0,
        birth_cap=args.birth_cap,
        workers=args.workers,
    )
    out = _out_dir(args) or Path(".")
    csv_path = out / "phase.csv"
    json_path = out / "phase.json"
    write_phase_csv(pg, csv_path)
    doc = pg.to_dict()
    json_path.write_text(_dump(doc) + "\n")
    write_manifest(out, argv, None, n_max, args.seed, [csv_path, json_path])
    summary = {
        "p_values": pg.p_values,
        "regime": pg.regime,
        "marginal": pg.marginal,
        "alpha_c": pg.alpha_c,
        "csv": str(csv_path),
        "json": str(json_path),
    }
    print(_dump(summary))
    return EXIT_OK


# --- offspring -----------------------------------------------------------------


def cmd_offspring(args, argv) -> int:
    chain = _chain(args)
    seed = _seed(args)
    alpha = _prob(args.alpha, "--alpha", lo_open=True)
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    n_max = _n_max(args, chain)
    analysis = analyze(chain, n_max, use_exact_beta=True)
    b = analysis.mu(alpha).F
    if b is None or b >= 1.0:
        raise UsageError(f"F({alpha}) = {b}: the offspring law is not a proper distribution")
    hist = sample_offspring_counts(chain, alpha, args.samples, seed, args.max_steps, args.workers)
    out = _out_dir(args) or Path(".")
    csv_path = out / "offspring.csv"
    hist.write_csv(csv_path)
    j = np.arange(max(hist.counts) + 1)
    result = {
        "alpha": alpha,
        "b": b,
        "samples": hist.samples,
        "censored": hist.censored,
        "mean_empirical": float(sum(k * c for k, c in hist.counts.items()) / hist.samples),
        "mean_analytic": b / (1.0 - b),
        "tv_distance": hist.tv_distance(b),
        "pmf": [float(x) for x in (1.0 - b) * b**j],
    }
    json_path = out / "offspring.json"
    json_path.write_text(_dump(result) + "\n")
    write_manifest(out, argv, chain, n_max, seed, [csv_path, json_path])
    print(_dump(result))
    return EXIT_OK


# --- wiring --------------------------------------------------------------------


def _common(sp: argparse.ArgumentParser, chain=True) -> None:
    if chain:
        sp.add_argument("--chain", help="chain JSON or path to a JSON file")
    sp.add_argument("--n-max", type=int, default=None, dest="n_max")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--config", default=None, help="JSON file of defaults; explicit flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("returns", help="return / first-return series with beta estimate")
    _common(sp)
    sp.set_defaults(func=cmd_returns)

    sp = sub.add_parser("alpha-c", help="criticality report")
    _common(sp)
    sp.add_argument("--numeric-beta", action="store_true", help="estimate beta from the series even if a formula exists")
    sp.set_defaults(func=cmd_alpha_c)

    sp = sub.add_parser("simulate", help="Monte Carlo survival estimate")
    _common(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--trials", type=int, default=10**4)
    sp.add_argument("--birth-cap", type=int, default=10**4, dest="birth_cap")
    sp.add_argument("--max-steps", type=int, default=10**6, dest="max_steps")
    sp.add_argument("--horizon", type=int, default=10**9)
    sp.add_argument("--trial-log", default=None, dest="trial_log", help="write one JSON line per trial")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("phase", help="(p, alpha) sweep for the walk on Z")
    _common(sp, chain=False)
    sp.add_argument("--p-range", type=float, nargs=2, default=(0.05, 0.95), dest="p_range")
    sp.add_argument("--alpha-range", type=float, nargs=2, default=(0.8, 0.99), dest="alpha_range")
    sp.add_argument("--grid-steps", type=int, default=19, dest="grid_steps")
    sp.add_argument("--alpha-steps", type=int, default=None, dest="alpha_steps")
    sp.add_argument("--trials", type=int, default=0, help="Monte Carlo trials per cell (0 = analytic only)")
    sp.add_argument("--birth-cap", type=int, default=10**4, dest="birth_cap")
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("offspring", help="empirical return-count law vs geometric")
    _common(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--samples", type=int, default=10**5)
    sp.add_argument("--max-steps", type=int, default=10**6, dest="max_steps")
    sp.set_defaults(func=cmd_offspring)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read --config: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("--config must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if isinstance(cfg.get("chain"), dict):
        cfg["chain"] = json.dumps(cfg["chain"])
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparsers.choices[args.command].set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        return args.func(args, argv)
    except (UsageError, ChainError, ValueError, BracketFailure) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT
    except (BudgetExceeded, MemoryError) as exc:
        _log(f"budget exceeded: {exc}")
        return EXIT_BUDGET


if __name__ == "__main__":
    raise SystemExit(main())
