"""Mean offspring mu(alpha), the survival dichotomy and the critical alpha.

An individual's offspring count is its number of returns to the origin
before dying.  By the strong Markov property it is geometric with
parameter b = F(alpha), the probability of at least one return before
death, so the genealogy is a Galton-Watson process with mean
mu(alpha) = sum_n alpha^n p_n = F / (1 - F).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .chains import ChainSpec, FiniteStochastic, exact_return_beta
from .series import (
    BetaEstimate,
    ReturnSeries,
    TailModel,
    beta_from_f,
    compute_series,
    default_tails,
    exact_beta_estimate,
)

BISECT_LO = 1e-6
BISECT_XTOL = 1e-12
ROUNDING = 1e-13


class NotSupercritical(ValueError):
    pass


class BracketFailure(ArithmeticError):
    pass


class Regime(str, enum.Enum):
    NO_SURVIVAL = "no_survival"
    TRANSITION = "transition"


@dataclass
class GenFunEval:
    alpha: float
    mu: float
    F: float | None
    truncation_bound: float


def _finite_generating_functions(chain: FiniteStochastic, alpha: float) -> tuple[float, float]:
    """Exact (mu, F) for a finite chain from the resolvent and the taboo system."""
    P = chain.matrix
    n = chain.n_states
    o = chain.origin
    if alpha >= 1.0:
        return math.inf, 1.0
    e = np.zeros(n)
    e[o] = 1.0
    g = np.linalg.solve(np.eye(n) - alpha * P, e)
    mu = float(g[o]) - 1.0
    # h(y) = E_y[alpha^tau_O] on the states other than O
    rest = [i for i in range(n) if i != o]
    if rest:
        A = np.eye(len(rest)) - alpha * P[np.ix_(rest, rest)]
        h = np.linalg.solve(A, alpha * P[rest, o])
        F = alpha * (P[o, o] + float(P[o, rest] @ h))
    else:
        F = alpha * P[o, o]
    return mu, float(F)


def mu_of_alpha(
    series: ReturnSeries,
    tail: TailModel | None,
    alpha: float,
    f_tail: TailModel | None = None,
) -> GenFunEval:
    """Evaluate mu(alpha) from the return series and F(alpha) from the first-return series.

    Finite chains are closed exactly (resolvent and taboo linear systems)
    instead of being extrapolated.  ``mu`` is ``inf`` for a recurrent chain
    at alpha = 1.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    chain = series.chain
    if isinstance(chain, FiniteStochastic):
        mu, F = _finite_generating_functions(chain, alpha)
        return GenFunEval(alpha, mu, F, ROUNDING * (1.0 + (mu if math.isfinite(mu) else 0.0)))

    N = series.n_max
    powers = np.power(alpha, np.arange(N + 1))
    mu = float(np.dot(powers[1:], series.p[1:]))
    if tail is not None and tail.kind != "none":
        extra = tail.mass(alpha)
        mu += extra
        bound = tail.mass_uncertainty(alpha)
    elif alpha < 1.0:
        bound = alpha ** (N + 1) / (1.0 - alpha)
    elif not np.any(series.p[N // 2 + 1 :] > 0):
        bound = 0.0
    else:
        raise ValueError("alpha = 1 needs a summable tail model for an infinite chain")
    if math.isinf(mu):
        return GenFunEval(alpha, math.inf, 1.0 if series.f is not None else None, 0.0)

    F = None
    if series.f is not None:
        F = float(np.dot(powers[1:], series.f[1:]))
        if f_tail is not None and f_tail.kind != "none":
            F += f_tail.mass(alpha)
            f_bound = f_tail.mass_uncertainty(alpha)
        else:
            f_bound = alpha ** (N + 1) * max(0.0, 1.0 - float(np.sum(series.f[1:])))
        F = min(F, 1.0)
        if F < 1.0:
            bound += f_bound / (1.0 - F) ** 2
    bound += ROUNDING * (1.0 + mu) + N * 1e-16 * (1.0 + mu)
    return GenFunEval(alpha, mu, F, bound)


def mu_at_one(beta: float) -> float:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be a probability, got {beta}")
    if beta >= 1.0:
        return math.inf
    return beta / (1.0 - beta)


def _check_b(b: float) -> float:
    b = float(b)
    if not 0.0 <= b < 1.0:
        raise ValueError(f"offspring parameter must lie in [0, 1), got {b}")
    return b


def offspring_pmf(b: float, j):
    """P(j returns before death) = (1-b) b^j; accepts scalar or array ``j``."""
    b = _check_b(b)
    j = np.asarray(j)
    if np.any(j < 0):
        raise ValueError("offspring count must be non-negative")
    out = (1.0 - b) * np.power(b, j, dtype=float)
    return float(out) if out.ndim == 0 else out


def extinction_probability(b: float) -> float:
    """Smallest root of s = (1-b)/(1-b s)."""
    b = _check_b(b)
    if b <= 0.5:
        return 1.0
    return (1.0 - b) / b


def survival_probability(b: float) -> float:
    return 1.0 - extinction_probability(b)


@dataclass(frozen=True)
class Classification:
    regime: Regime
    marginal: bool


def classify(beta: BetaEstimate | float) -> Classification:
    if not isinstance(beta, BetaEstimate):
        beta = exact_beta_estimate(float(beta))
    regime = Regime.TRANSITION if beta.value > 0.5 else Regime.NO_SURVIVAL
    marginal = abs(beta.value - 0.5) <= max(beta.uncertainty, 1e-12)
    return Classification(regime, marginal)


@dataclass
class CriticalityReport:
    beta: BetaEstimate
    mu_at_one: float
    regime: Regime
    marginal: bool = False
    alpha_c: float | None = None
    bracket: tuple[float, float] | None = None
    truncation_bound: float | None = None

    @property
    def bracket_width(self) -> float | None:
        return None if self.bracket is None else self.bracket[1] - self.bracket[0]

    def survives(self, alpha: float) -> bool:
        # alpha == alpha_c dies out
        return self.alpha_c is not None and alpha > self.alpha_c

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.to_dict(),
            "mu_at_one": "inf" if math.isinf(self.mu_at_one) else self.mu_at_one,
            "regime": self.regime.value,
            "alpha_c": self.alpha_c,
            "bracket": list(self.bracket) if self.bracket else None,
            "bracket_width": self.bracket_width,
            "truncation_bound": self.truncation_bound,
            "marginal": self.marginal,
            "boundary": "alpha == alpha_c dies out",
        }


def alpha_critical(
    series: ReturnSeries,
    tail: TailModel | None,
    beta: BetaEstimate,
    xtol: float = BISECT_XTOL,
) -> CriticalityReport:
    """Bisect mu(alpha) = 1 on [1e-6, 1], taking mu(1) = beta / (1 - beta) at the top."""
    cls = classify(beta)
    if cls.regime is not Regime.TRANSITION:
        raise NotSupercritical(f"beta = {beta.value} <= 1/2: no alpha gives survival")
    top = mu_at_one(beta.value)
    if top <= 1.0:
        raise BracketFailure(f"mu(1) = {top} <= 1")
    lo, hi = BISECT_LO, 1.0
    if mu_of_alpha(series, tail, lo).mu >= 1.0:
        raise BracketFailure(f"mu({lo}) >= 1; series and tail are inconsistent")
    for _ in range(200):
        if hi - lo < xtol:
            break
        mid = 0.5 * (lo + hi)
        if mu_of_alpha(series, tail, mid).mu > 1.0:
            hi = mid
        else:
            lo = mid
    if hi == 1.0:
        raise BracketFailure("series mu stays <= 1 below alpha = 1, contradicting mu(1) > 1")
    alpha_c = 0.5 * (lo + hi)
    ev = mu_of_alpha(series, tail, alpha_c)
    return CriticalityReport(
        beta=beta,
        mu_at_one=top,
        regime=cls.regime,
        marginal=cls.marginal,
        alpha_c=alpha_c,
        bracket=(lo, hi),
        truncation_bound=ev.truncation_bound,
    )


@dataclass
class Analysis:
    series: ReturnSeries
    p_tail: TailModel
    f_tail: TailModel
    report: CriticalityReport

    def mu(self, alpha: float) -> GenFunEval:
        return mu_of_alpha(self.series, self.p_tail, alpha, self.f_tail)


def analyze(chain: ChainSpec, n_max: int, use_exact_beta: bool = True) -> Analysis:
    """Series, tails, beta and the criticality report for one chain.

    With ``use_exact_beta`` the closed-form return probability is used when
    the chain has one; otherwise beta comes from the first-return series.
    """
    series = compute_series(chain, n_max)
    p_tail, f_tail = default_tails(series)
    exact = exact_return_beta(chain) if use_exact_beta else None
    beta = exact_beta_estimate(exact) if exact is not None else beta_from_f(series, f_tail)
    cls = classify(beta)
    if cls.regime is Regime.TRANSITION:
        report = alpha_critical(series, p_tail, beta)
    else:
        report = CriticalityReport(beta, mu_at_one(beta.value), cls.regime, cls.marginal)
    return Analysis(series, p_tail, f_tail, report)


def killed_return_probability(chain: ChainSpec, alpha: float, n_max: int) -> float:
    """F(alpha): probability of returning at least once before dying."""
    series = compute_series(chain, n_max)
    p_tail, f_tail = default_tails(series)
    return mu_of_alpha(series, p_tail, alpha, f_tail).F
