"""Return probabilities p_n(O,O), first-return probabilities f_n and their tails.

The n-step return probabilities are computed by evolving the exact state
distribution from the point mass at the origin (no pruning), then inverted
through the renewal identity ``p_n = sum_k f_k p_{n-k}``.  Tails beyond
``n_max`` are extrapolated from a least-squares fit over the even indices,
which is where all built-in lattice walks put their mass.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import zeta

from .chains import BiasedWalkZ, ChainSpec, FiniteStochastic, SimpleWalkZd

MASS_TOL = 1e-9
CLAMP_WARN = 1e-12
CLAMP_MAX = 1e-9
MAX_DP_ENTRIES = 10**8
MIN_FIT_POINTS = 8
# below this the fitted logs stop meaning anything
FIT_FLOOR = 1e-250


class BudgetExceeded(RuntimeError):
    pass


class NegativeFirstReturn(ArithmeticError):
    pass


class InsufficientData(ValueError):
    pass


class DegenerateFit(ValueError):
    pass


class MassLeak(ArithmeticError):
    pass


@dataclass
class ReturnSeries:
    chain: ChainSpec
    p: np.ndarray
    f: np.ndarray | None = None  # f[0] is 0 by convention

    @property
    def n_max(self) -> int:
        return len(self.p) - 1


def reachable_entries(chain: ChainSpec, n_max: int) -> int:
    if isinstance(chain, (BiasedWalkZ, SimpleWalkZd)):
        return (2 * n_max + 1) ** chain.dim
    return chain.n_states


def _lattice_dp(minus: list[float], plus: list[float], n_max: int) -> np.ndarray:
    d = len(minus)
    dist = np.ones((1,) * d)
    p = np.zeros(n_max + 1)
    p[0] = 1.0
    inner = [slice(1, -1)] * d
    for n in range(1, n_max + 1):
        new = np.zeros(tuple(s + 2 for s in dist.shape))
        for k in range(d):
            down = list(inner)
            down[k] = slice(0, -2)
            up = list(inner)
            up[k] = slice(2, None)
            if minus[k]:
                new[tuple(down)] += minus[k] * dist
            if plus[k]:
                new[tuple(up)] += plus[k] * dist
        dist = new
        mass = dist.sum()
        if abs(mass - 1.0) > MASS_TOL:
            raise MassLeak(f"distribution mass {mass!r} at step {n}")
        p[n] = dist[(n,) * d]
    return p


def _folded_lattice_dp(d: int, n_max: int) -> np.ndarray:
    """Simple symmetric walk on Z^d stored on the orthant x >= 0.

    Each entry holds the probability of one representative of its
    reflection class; a point with k nonzero coordinates stands for 2**k
    lattice points.
    """
    w = 1.0 / (2 * d)
    dist = np.ones((1,) * d)
    p = np.zeros(n_max + 1)
    p[0] = 1.0
    for n in range(1, n_max + 1):
        L = dist.shape[0]
        new = np.zeros((L + 1,) * d)
        body = [slice(0, L)] * d
        wd = w * dist
        for k in range(d):
            out = list(body)
            out[k] = slice(1, L + 1)
            new[tuple(out)] += wd
            if L > 1:
                src = list(body)
                src[k] = slice(1, L)
                out = list(body)
                out[k] = slice(0, L - 1)
                new[tuple(out)] += wd[tuple(src)]
                # the mirror image of x_k = -1 is x_k = +1
                src[k] = slice(1, 2)
                out[k] = slice(0, 1)
                new[tuple(out)] += wd[tuple(src)]
        dist = new
        mult = np.full(L + 1, 2.0)
        mult[0] = 1.0
        mass = dist
        for _ in range(d):
            mass = np.tensordot(mass, mult, axes=([0], [0]))
        if abs(float(mass) - 1.0) > MASS_TOL:
            raise MassLeak(f"distribution mass {float(mass)!r} at step {n}")
        p[n] = dist[(0,) * d]
    return p


def _finite_dp(chain: FiniteStochastic, n_max: int) -> np.ndarray:
    P = chain.matrix
    v = np.zeros(chain.n_states)
    v[chain.origin] = 1.0
    p = np.empty(n_max + 1)
    p[0] = 1.0
    for n in range(1, n_max + 1):
        v = v @ P
        mass = v.sum()
        if abs(mass - 1.0) > MASS_TOL:
            raise MassLeak(f"distribution mass {mass!r} at step {n}")
        p[n] = v[chain.origin]
    return p


def return_probabilities_dp(chain: ChainSpec, n_max: int) -> ReturnSeries:
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be a positive integer, got {n_max!r}")
    n_max = int(n_max)
    entries = reachable_entries(chain, n_max)
    if entries > MAX_DP_ENTRIES:
        raise BudgetExceeded(
            f"{entries} reachable states at n_max={n_max} exceeds the budget of {MAX_DP_ENTRIES}"
        )
    if isinstance(chain, BiasedWalkZ):
        p = _lattice_dp([1.0 - chain.p], [chain.p], n_max)
    elif isinstance(chain, SimpleWalkZd):
        p = _folded_lattice_dp(chain.d, n_max)
    elif isinstance(chain, FiniteStochastic):
        p = _finite_dp(chain, n_max)
    else:
        raise TypeError(f"unknown chain type {type(chain).__name__}")
    return ReturnSeries(chain=chain, p=p)


def first_return_inversion(series: ReturnSeries) -> ReturnSeries:
    """Recover first-return probabilities from ``series.p`` by the renewal recursion.

    Small negative values produced by cancellation are clamped to zero;
    anything below ``-1e-9`` means the input is not a return series.
    """
    p = series.p
    N = series.n_max
    f = np.zeros(N + 1)
    for n in range(1, N + 1):
        val = p[n] - np.dot(f[1:n], p[n - 1 : 0 : -1])
        if val < 0.0:
            if val < -CLAMP_MAX:
                raise NegativeFirstReturn(f"f[{n}] = {val!r}; input series is inconsistent")
            if val < -CLAMP_WARN:
                warnings.warn(f"clamping f[{n}] = {val:.3e} to zero", RuntimeWarning, stacklevel=2)
            val = 0.0
        f[n] = val
    return replace(series, f=f)


def compute_series(chain: ChainSpec, n_max: int) -> ReturnSeries:
    return first_return_inversion(return_probabilities_dp(chain, n_max))


# --- tails -------------------------------------------------------------------


def _sum_terms(log_term, m0: int, *, max_terms: int = 10**7, chunk: int = 8192) -> float:
    """Sum exp(log_term(m)) for m >= m0 until increments drop below 1e-15."""
    total = 0.0
    m = m0
    while m - m0 < max_terms:
        ms = np.arange(m, m + chunk, dtype=float)
        terms = np.exp(log_term(ms))
        total += terms.sum()
        if terms[-1] < 1e-15 and terms[-1] <= terms[0]:
            return total
        m += chunk
    # slow decay: bound the rest by the last ratio continued geometrically
    ratio = terms[-1] / terms[-2] if terms[-2] > 0 else 0.0
    if ratio >= 1.0:
        return math.inf
    return total + terms[-1] * ratio / (1.0 - ratio)


@dataclass
class TailModel:
    """Extrapolation of a return series beyond ``n_max`` along even indices n = 2m.

    ``power_law``: y[2m] ~ coefficient * m**-exponent.
    ``geometric``: y[2m] ~ coefficient * ratio**m * m**-prefactor_exponent.
    ``target`` says which series ('p' or 'f') was fitted.
    """

    kind: str = "none"
    target: str = "p"
    n_max: int = 0
    exponent: float = 0.0
    coefficient: float = 0.0
    ratio: float = 0.0
    prefactor_exponent: float = 0.0
    fit_window: tuple[int, int] | None = None
    quality: float = 0.0
    tail_mass: float = 0.0
    uncertainty: float = 0.0
    alternates: list["TailModel"] = field(default_factory=list, repr=False)

    def _log_term(self, alpha: float):
        la = 2.0 * math.log(alpha)
        lc = math.log(self.coefficient)
        if self.kind == "power_law":
            g = self.exponent
            return lambda m: lc - g * np.log(m) + la * m
        lr = math.log(self.ratio)
        d = self.prefactor_exponent
        return lambda m: lc + lr * m - d * np.log(m) + la * m

    def mass(self, alpha: float = 1.0) -> float:
        """Sum of alpha**n * y[n] over the extrapolated terms n > n_max."""
        if self.kind == "none" or self.coefficient == 0.0:
            return 0.0
        m0 = self.n_max // 2 + 1
        if alpha >= 1.0:
            if self.kind == "power_law":
                if self.exponent <= 1.0:
                    return math.inf
                return self.coefficient * float(zeta(self.exponent, m0))
            if self.ratio >= 1.0:
                return math.inf
        return _sum_terms(self._log_term(alpha), m0)

    def mass_uncertainty(self, alpha: float = 1.0) -> float:
        if self.kind == "none":
            return 0.0
        if len(self.alternates) < 2:
            return 0.0
        early, late = (alt.mass(alpha) for alt in self.alternates[:2])
        if math.isinf(early) or math.isinf(late):
            return math.inf
        # fitted parameters keep drifting past the window; the early/late gap
        # understates the distance to the asymptote by about a factor of two
        return 3.0 * abs(late - early)


def _window_points(y: np.ndarray, window: tuple[int, int]):
    lo, hi = window
    if lo < 1 or hi > len(y) - 1 or lo > hi:
        raise InsufficientData(f"window {window} outside 1..{len(y) - 1}")
    n = np.arange(lo + lo % 2, hi + 1, 2)
    if n.size < MIN_FIT_POINTS:
        raise InsufficientData(f"window {window} has {n.size} even indices, need {MIN_FIT_POINTS}")
    vals = y[n]
    if np.any(vals <= 0):
        raise DegenerateFit(f"non-positive values in window {window}")
    return n // 2, vals


def _fit(kind: str, m: np.ndarray, vals: np.ndarray):
    logy = np.log(vals)
    if kind == "power_law":
        A = np.column_stack([np.ones(m.size), -np.log(m)])
    else:
        A = np.column_stack([np.ones(m.size), m, -np.log(m)])
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    resid = logy - A @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    if kind == "power_law":
        return {"coefficient": math.exp(coef[0]), "exponent": float(coef[1])}, rms
    return {
        "coefficient": math.exp(coef[0]),
        "ratio": math.exp(coef[1]),
        "prefactor_exponent": float(coef[2]),
    }, rms


def fit_tail(
    series: ReturnSeries,
    window: tuple[int, int],
    kind: str = "power_law",
    target: str | None = None,
) -> TailModel:
    """Fit a tail model over the even indices of ``window`` (inclusive).

    By default power laws are fitted to ``p`` and geometric models to ``f``.
    ``uncertainty`` is three times the gap between the tail masses of fits
    on the early and late halves of the window.
    """
    if kind not in ("power_law", "geometric"):
        raise ValueError(f"unknown tail kind {kind!r}")
    if target is None:
        target = "p" if kind == "power_law" else "f"
    y = series.p if target == "p" else series.f
    if y is None:
        raise ValueError("series has no first-return probabilities; run first_return_inversion")
    m, vals = _window_points(y, window)
    params, rms = _fit(kind, m, vals)
    model = TailModel(
        kind=kind,
        target=target,
        n_max=series.n_max,
        fit_window=(int(window[0]), int(window[1])),
        quality=rms,
        **params,
    )
    half = m.size // 2
    for sl in (slice(None, half), slice(half, None)):
        alt_params, _ = _fit(kind, m[sl], vals[sl])
        model.alternates.append(TailModel(kind=kind, target=target, n_max=series.n_max, **alt_params))
    model.tail_mass = model.mass(1.0)
    model.uncertainty = model.mass_uncertainty(1.0)
    return model


def default_window(y: np.ndarray) -> tuple[int, int] | None:
    """Later half of the usable even indices, or None if fewer than 8 are usable."""
    n = np.arange(2, len(y), 2)
    n = n[y[n] > FIT_FLOOR]
    if n.size < MIN_FIT_POINTS:
        return None
    half = n.size // 2
    sel = n[half:] if n.size - half >= MIN_FIT_POINTS else n[-MIN_FIT_POINTS:]
    return int(sel[0]), int(sel[-1])


def default_tails(series: ReturnSeries) -> tuple[TailModel, TailModel]:
    """Pick (p_tail, f_tail) by chain family: none for finite chains,
    geometric for off-critical 1-D walks, power law otherwise."""
    chain = series.chain
    none_p = TailModel(kind="none", target="p", n_max=series.n_max)
    none_f = TailModel(kind="none", target="f", n_max=series.n_max)
    if isinstance(chain, FiniteStochastic):
        return none_p, none_f
    kind = "geometric" if isinstance(chain, BiasedWalkZ) and chain.p != 0.5 else "power_law"
    tails = []
    for target, y, empty in (("p", series.p, none_p), ("f", series.f, none_f)):
        win = default_window(y) if y is not None else None
        tails.append(empty if win is None else fit_tail(series, win, kind, target))
    return tails[0], tails[1]


# --- beta and Green sum -----------------------------------------------------------


@dataclass
class BetaEstimate:
    lower_bound: float
    value: float
    method: str
    uncertainty: float = 0.0

    def to_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "value": self.value,
            "uncertainty": self.uncertainty,
            "method": self.method,
        }


def beta_from_f(series: ReturnSeries, tail: TailModel | None = None) -> BetaEstimate:
    if series.f is None:
        raise ValueError("series has no first-return probabilities; run first_return_inversion")
    lower = float(np.sum(series.f[1:]))
    rounding = series.n_max * 1e-15
    if isinstance(series.chain, FiniteStochastic):
        # finite irreducible chains are recurrent
        return BetaEstimate(min(lower, 1.0), 1.0, "finite_chain", 0.0)
    if tail is None or tail.kind == "none":
        return BetaEstimate(min(lower, 1.0), min(lower, 1.0), "series_tail", rounding)
    if tail.target != "f":
        raise ValueError("beta_from_f needs a tail fitted to the first-return series")
    mass = tail.tail_mass
    value = min(1.0, lower + mass)
    return BetaEstimate(min(lower, 1.0), value, "series_tail", tail.uncertainty + rounding)


def exact_beta_estimate(beta: float) -> BetaEstimate:
    return BetaEstimate(beta, beta, "exact_formula", 0.0)


@dataclass
class GreenResult:
    G: float
    verdict: str
    beta_tilde: float | None = None
    uncertainty: float = 0.0

    @property
    def beta_tilde_uncertainty(self) -> float:
        if self.beta_tilde is None:
            return math.inf
        return self.uncertainty / self.G**2

    def to_dict(self) -> dict:
        return {
            "G": "inf" if math.isinf(self.G) else self.G,
            "verdict": self.verdict,
            "beta_tilde": self.beta_tilde,
            "G_uncertainty": self.uncertainty,
        }


def green_sum(series: ReturnSeries, tail: TailModel | None = None) -> GreenResult:
    """Estimate G = sum_n p_n and decide recurrence from its divergence."""
    partial = float(np.sum(series.p))
    if isinstance(series.chain, FiniteStochastic):
        return GreenResult(math.inf, "recurrent")
    if tail is None or tail.kind == "none":
        # an identically vanishing late series leaves nothing to extrapolate
        late = series.p[series.n_max // 2 + 1 :]
        if late.size and not np.any(late > 0):
            return GreenResult(partial, "transient", 1.0 - 1.0 / partial, 0.0)
        return GreenResult(partial, "inconclusive")
    if tail.target != "p":
        raise ValueError("green_sum needs a tail fitted to the return series")
    if tail.kind == "power_law":
        gammas = [tail.exponent] + [alt.exponent for alt in tail.alternates]
        if min(gammas) <= 1.0:
            return GreenResult(math.inf, "recurrent")
    G = partial + tail.tail_mass
    unc = tail.uncertainty
    if not math.isfinite(G):
        return GreenResult(math.inf, "recurrent")
    if unc <= 0.1 * tail.tail_mass or unc < 1e-12 * G:
        return GreenResult(G, "transient", 1.0 - 1.0 / G, unc)
    return GreenResult(G, "inconclusive", None, unc)


@dataclass
class AbelTable:
    rows: list[tuple[float, float]]
    bound: float
    monotone: bool
    bounded: bool


def abel_consistency(
    series: ReturnSeries, alphas, tail: TailModel | None = None
) -> AbelTable:
    """Tabulate sum_{n>=1} alpha^n p_n (plus extrapolated tail) over ``alphas``.

    The sums must be nondecreasing in alpha and stay below the Green-sum
    estimate sum_{n>=1} p_n + tail mass.
    """
    alphas = sorted(float(a) for a in alphas)
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {a}")
    n = np.arange(1, series.n_max + 1)
    rows = []
    for a in alphas:
        s = float(np.dot(np.power(a, n), series.p[1:]))
        if tail is not None and tail.kind != "none":
            s += tail.mass(a)
        rows.append((a, s))
    bound = float(np.sum(series.p[1:]))
    if tail is not None and tail.kind != "none":
        bound += tail.tail_mass
    if isinstance(series.chain, FiniteStochastic):
        bound = math.inf
    sums = [s for _, s in rows]
    slack = 1e-12 * (1.0 + max(sums, default=0.0))
    monotone = all(b >= a - slack for a, b in zip(sums, sums[1:]))
    bounded = all(s <= bound + slack for s in sums)
    return AbelTable(rows, bound, monotone, bounded)


# --- export -----------------------------------------------------------------------


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def write_series_csv(series: ReturnSeries, path: str | Path) -> None:
    f = series.f if series.f is not None else np.zeros_like(series.p)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "p_n", "f_n"])
        for n in range(series.n_max + 1):
            w.writerow([n, fmt17(series.p[n]), fmt17(f[n])])


def read_series_csv(path: str | Path, chain: ChainSpec) -> ReturnSeries:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ReturnSeries(chain=chain, p=data[:, 1].copy(), f=data[:, 2].copy())
