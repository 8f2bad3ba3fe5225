"""Monte Carlo simulation of the branching chain.

Each individual starts at the origin, flips a death coin (probability
1 - alpha) before every step and gives birth once per return to the
origin.  Trials walk the genealogy breadth-first, which decides survival
exactly as the real-time process would.  A trial counts as survived once
``birth_cap`` births have happened.
"""
from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import _kernels as K
from .chains import BiasedWalkZ, ChainSpec, FiniteStochastic, SimpleWalkZd
from .criticality import offspring_pmf

STATUS_NAMES = {K.EXTINCT: "extinct", K.SURVIVED: "survived_by_cap", K.CENSORED: "censored_at_horizon"}
SEED_MAX = 2**64


def _encode(chain: ChainSpec):
    """Flatten a chain into the kernel's (kind, p, d, cum, origin) arguments."""
    dummy = np.zeros((1, 1))
    if isinstance(chain, BiasedWalkZ):
        return K.KIND_BIASED, chain.p, 1, dummy, 0
    if isinstance(chain, SimpleWalkZd):
        return K.KIND_LATTICE, 0.5, chain.d, dummy, 0
    if isinstance(chain, FiniteStochastic):
        return K.KIND_FINITE, 0.0, 1, np.cumsum(chain.matrix, axis=1), chain.origin
    raise TypeError(f"unknown chain type {type(chain).__name__}")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < SEED_MAX:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def run_individual(chain: ChainSpec, alpha: float, max_steps: int, rng: np.random.Generator):
    """Simulate one individual; returns (number of returns, censored flag)."""
    alpha = _check_alpha(alpha)
    kind, p, d, cum, origin = _encode(chain)
    key = np.uint64(rng.integers(0, SEED_MAX, dtype=np.uint64))
    buf = np.empty(1, np.int64)
    r, _, censored = K.run_individual(kind, p, d, cum, origin, alpha, int(max_steps), key, buf, 0)
    return int(r), bool(censored)


@dataclass
class OffspringHistogram:
    counts: dict[int, int]
    samples: int
    censored: int = 0

    def frequencies(self, j_max: int | None = None) -> np.ndarray:
        top = max(self.counts, default=0) if j_max is None else j_max
        out = np.zeros(top + 1)
        for j, c in self.counts.items():
            if j <= top:
                out[j] = c
        return out / self.samples

    def tv_distance(self, b: float) -> float:
        """Total variation to the geometric law (1-b) b^j, unobserved tail included."""
        emp = self.frequencies()
        pmf = offspring_pmf(b, np.arange(emp.size))
        return 0.5 * (float(np.abs(emp - pmf).sum()) + b ** emp.size)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("j,count\n")
            for j in sorted(self.counts):
                fh.write(f"{j},{self.counts[j]}\n")


def _chunks(n: int, workers: int):
    size = max(1, -(-n // max(1, workers * 4)))
    return [(s, min(size, n - s)) for s in range(0, n, size)]


def sample_offspring_counts(
    chain: ChainSpec,
    alpha: float,
    n: int,
    seed: int,
    max_steps: int = 10**6,
    workers: int = 1,
) -> OffspringHistogram:
    alpha = _check_alpha(alpha)
    seed = _check_seed(seed)
    if n < 1:
        raise ValueError("need at least one sample")
    kind, p, d, cum, origin = _encode(chain)
    out = np.zeros(n, np.int64)
    cens = np.zeros(n, np.bool_)

    def job(span):
        start, count = span
        K.sample_returns(
            kind, p, d, cum, origin, alpha, int(max_steps), np.uint64(seed),
            start, count, out[start : start + count], cens[start : start + count],
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(job, _chunks(n, workers)))
    values, freq = np.unique(out, return_counts=True)
    return OffspringHistogram(
        {int(v): int(c) for v, c in zip(values, freq)}, n, int(cens.sum())
    )


@dataclass(frozen=True)
class SimConfig:
    chain: ChainSpec
    alpha: float
    trials: int = 10**4
    seed: int = 0
    max_steps_per_individual: int = 10**6
    birth_cap: int = 10**4
    time_horizon: int = 10**9

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_seed(self.seed)
        for name in ("trials", "max_steps_per_individual", "birth_cap", "time_horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    status: str
    total_births: int
    peak_population: int
    steps_executed: int
    at_step: int | None = None
    alive_count: int | None = None

    def to_record(self) -> dict:
        rec = {
            "trial": self.trial,
            "status": self.status,
            "births": self.total_births,
            "peak_pop": self.peak_population,
            "steps": self.steps_executed,
        }
        if self.at_step is not None:
            rec["at_step"] = self.at_step
        if self.alive_count is not None:
            rec["alive"] = self.alive_count
        return rec


def simulate_population(config: SimConfig, trial_index: int) -> TrialOutcome:
    """One trial; a pure function of (config, trial_index).

    ``peak_population`` is the largest number of born-but-unprocessed
    individuals in the genealogy queue, not a real-time population count.
    """
    kind, p, d, cum, origin = _encode(config.chain)
    return _trial(config, (kind, p, d, cum, origin), trial_index)


def _trial(config: SimConfig, enc, trial_index: int) -> TrialOutcome:
    kind, p, d, cum, origin = enc
    status, at, births, peak, steps, alive = K.simulate_trial(
        kind, p, d, cum, origin, float(config.alpha), config.max_steps_per_individual,
        config.birth_cap, config.time_horizon, np.uint64(config.seed), trial_index,
    )
    return TrialOutcome(
        trial=trial_index,
        status=STATUS_NAMES[status],
        total_births=int(births),
        peak_population=int(peak),
        steps_executed=int(steps),
        at_step=int(at) if status == K.EXTINCT else None,
        alive_count=int(alive) if status == K.CENSORED else None,
    )


def run_trials(config: SimConfig, workers: int = 1) -> list[TrialOutcome]:
    enc = _encode(config.chain)

    def job(span):
        start, count = span
        return [_trial(config, enc, i) for i in range(start, start + count)]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(job, _chunks(config.trials, workers)))
    return [o for part in parts for o in part]


@dataclass
class SurvivalEstimate:
    trials: int
    survived: int
    censored: int
    birth_cap: int
    wilson_interval: tuple[float, float] = field(default=(0.0, 1.0))

    @property
    def survived_fraction(self) -> float:
        return self.survived / self.trials

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.trials

    @property
    def half_width(self) -> float:
        lo, hi = self.wilson_interval
        return 0.5 * (hi - lo)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "survived": self.survived,
            "censored": self.censored,
            "extinct": self.trials - self.survived - self.censored,
            "survived_fraction": self.survived_fraction,
            "censored_fraction": self.censored_fraction,
            "wilson_interval": list(self.wilson_interval),
            "birth_cap": self.birth_cap,
        }


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def summarize(outcomes: list[TrialOutcome], birth_cap: int) -> SurvivalEstimate:
    tally = Counter(o.status for o in outcomes)
    n = len(outcomes)
    survived = tally["survived_by_cap"]
    return SurvivalEstimate(
        trials=n,
        survived=survived,
        censored=tally["censored_at_horizon"],
        birth_cap=birth_cap,
        wilson_interval=wilson_interval(survived, n),
    )


def estimate_survival(config: SimConfig, workers: int = 1, trial_log=None) -> SurvivalEstimate:
    """Run all trials; optionally stream one JSON line per trial to ``trial_log``.

    Censored trials are reported separately and never counted as survivals.
    """
    outcomes = run_trials(config, workers)
    if trial_log is not None:
        for o in outcomes:
            trial_log.write(json.dumps(o.to_record()) + "\n")
    return summarize(outcomes, config.birth_cap)
