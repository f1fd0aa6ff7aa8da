"""
Large deviations of the uniformized M/M/1 queue.

Rate function of the ±1 increments, the exponent of the constrained
excursion event for the fluid path q^n_t = Q_{⌊nt⌋}/n, and the numeric
lemmas used to bound the product terms of the counterexample.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import xlogy
from scipy.stats import norm

from markovsa.errors import DomainError
from markovsa.rng import run_generator

logger = logging.getLogger(__name__)

# Slack for comparing a path against the region boundaries
REGION_TOL = 1e-9

# Lattice slack, in customers, on the bounds checked at the grid times j/n
LATTICE_SLACK = 1.0

# Runs simulated together by the Monte Carlo estimator
EXCURSION_CHUNK = 100_000


@dataclass(frozen=True)
class RateFunction:
    """I(v) = ½(1+v)log((1+v)/(2α)) + ½(1-v)log((1-v)/(2μ)) on [-1, 1], +∞ outside"""
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def from_load(cls, load: float) -> "RateFunction":
        return cls(alpha=load / (1.0 + load))

    @property
    def mu(self) -> float:
        return 1.0 - self.alpha

    @property
    def delta(self) -> float:
        """δ = μ - α"""
        return self.mu - self.alpha

    @property
    def sigma(self) -> float:
        """σ = log(1 + 2δ)/(2δ)"""
        if self.delta <= 0:
            raise DomainError(f"sigma needs delta > 0, got {self.delta}")
        return math.log1p(2.0 * self.delta) / (2.0 * self.delta)

    def __call__(self, v: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        v = np.asarray(v, dtype=np.float64)
        up, down = 1.0 + v, 1.0 - v
        with np.errstate(invalid="ignore", divide="ignore"):
            value = 0.5 * (
                xlogy(up, up) - up * math.log(2.0 * self.alpha)
                + xlogy(down, down) - down * math.log(2.0 * self.mu)
            )
        value = np.where(np.abs(v) <= 1.0, value, np.inf)
        return float(value) if value.ndim == 0 else value

    def log_mgf(self, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Λ(s) = log(α e^s + μ e^{-s}), whose convex dual is I"""
        return np.logaddexp(math.log(self.alpha) + np.asarray(s), math.log(self.mu) - np.asarray(s))


@dataclass(frozen=True)
class LdpExponent:
    value: float
    quadratic_bound: float
    epsilon: float


def _check_epsilon(rate: RateFunction, epsilon: float) -> None:
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if rate.delta <= 0:
        raise DomainError(f"constraint region needs delta = mu - alpha > 0, got {rate.delta}")


def ldp_exponent(rate: RateFunction, epsilon: float) -> LdpExponent:
    """
    -{ε I(δ(1+ε)) + (½ - ε) I(δ)} with the quadratic comparison value -δ²/(2α).

    DomainError when δ(1+ε) ≥ 1, where I is infinite.
    """
    _check_epsilon(rate, epsilon)
    delta = rate.delta
    if delta * (1.0 + epsilon) >= 1.0:
        raise DomainError(f"delta*(1+epsilon) = {delta * (1 + epsilon)} >= 1")
    value = -(epsilon * rate(delta * (1.0 + epsilon)) + (0.5 - epsilon) * rate(delta))
    return LdpExponent(value=float(value), quadratic_bound=-(delta**2) / (2.0 * rate.alpha), epsilon=epsilon)


def pinched_exponent(rate: RateFunction, epsilon: float) -> float:
    """
    -{ε I(2δ) + (½ - ε) I(δ)}: the region forces q_ε = 2δε, so the cheapest
    path climbs at slope 2δ before following the lower boundary.
    """
    _check_epsilon(rate, epsilon)
    if 2.0 * rate.delta > 1.0:
        raise DomainError(f"2*delta = {2 * rate.delta} > 1")
    return float(-(epsilon * rate(2.0 * rate.delta) + (0.5 - epsilon) * rate(rate.delta)))


def region_floor_path(delta: float, epsilon: float, t: Union[float, np.ndarray]) -> np.ndarray:
    """Floor of the constraint region: slope 2δ up to ε, then δε + min{δt, δ(1-t)}"""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t <= epsilon, 2.0 * delta * t, delta * epsilon + np.minimum(delta * t, delta * (1.0 - t)))


def region_bounds(delta: float, epsilon: float, t: np.ndarray):
    """(lower, upper) of δε + min{δt, δ(1-t)} ≤ q_t ≤ 2δt; unconstrained before ε"""
    t = np.asarray(t, dtype=np.float64)
    active = t >= epsilon - REGION_TOL
    lower = np.where(active, delta * epsilon + np.minimum(delta * t, delta * (1.0 - t)), -np.inf)
    upper = np.where(active, 2.0 * delta * t, np.inf)
    return lower, upper


def in_constraint_region(q: np.ndarray, t: np.ndarray, delta: float, epsilon: float) -> bool:
    """Whether the path values q at times t respect the region's bounds"""
    lower, upper = region_bounds(delta, epsilon, t)
    q = np.asarray(q, dtype=np.float64)
    return bool(np.all((q >= lower - REGION_TOL) & (q <= upper + REGION_TOL)))


def _grid_bounds(rate: RateFunction, epsilon: float, n: int):
    """
    Bounds on Q_j at the grid times j/n, j = 0..n, widened by LATTICE_SLACK.

    At t = ε the region pinches to the single value 2δε, and for δ < ½ no
    integer path fits the unwidened bounds just after it.
    """
    t = np.arange(n + 1) / n
    lower, upper = region_bounds(rate.delta, epsilon, t)
    return n * lower - LATTICE_SLACK, n * upper + LATTICE_SLACK


@dataclass
class ExcursionEstimate:
    """Frequency of q^n ∈ R_ε with a 95% Wilson interval"""
    n: int
    epsilon: float
    successes: int
    n_runs: int
    wilson_low: float
    wilson_high: float
    exponent: float

    @property
    def frequency(self) -> float:
        return self.successes / self.n_runs

    @property
    def log_rate(self) -> Optional[float]:
        """(1/n) log frequency, None when no run hit the region"""
        return math.log(self.frequency) / self.n if self.successes else None


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def excursion_probability(
    rate: RateFunction,
    epsilon: float,
    n: int,
    n_runs: int,
    seed: int,
) -> ExcursionEstimate:
    """
    Monte Carlo estimate of P{q^n ∈ R_ε} for the queue started empty.

    A piecewise-constant q^n cannot meet the pinch at t = ε on a whole
    interval, so the bounds are checked at the grid times j/n ≥ ε, one
    customer wide on each side.
    """
    _check_epsilon(rate, epsilon)
    if n < 1 or n_runs < 1:
        raise ValueError("n and n_runs must be positive")
    lower, upper = _grid_bounds(rate, epsilon, n)
    successes = 0
    for chunk, start in enumerate(range(0, n_runs, EXCURSION_CHUNK)):
        size = min(EXCURSION_CHUNK, n_runs - start)
        rng = run_generator(seed, chunk)
        queue = np.zeros(size, dtype=np.int64)
        alive = np.ones(size, dtype=bool)
        for j in range(1, n + 1):
            up = rng.random(size) < rate.alpha
            queue = np.where(up, queue + 1, np.maximum(queue - 1, 0))
            alive &= (queue >= lower[j]) & (queue <= upper[j])
        successes += int(alive.sum())

    low, high = wilson_interval(successes, n_runs)
    exponent = ldp_exponent(rate, epsilon).value
    logger.debug(f"excursion n={n} eps={epsilon}: {successes}/{n_runs}")
    return ExcursionEstimate(
        n=n, epsilon=epsilon, successes=successes, n_runs=n_runs,
        wilson_low=low, wilson_high=high, exponent=exponent,
    )


def excursion_probability_exact(rate: RateFunction, epsilon: float, n: int) -> float:
    """P{q^n ∈ R_ε} by forward recursion of the queue law, killed outside the region"""
    _check_epsilon(rate, epsilon)
    lower, upper = _grid_bounds(rate, epsilon, n)
    levels = np.arange(n + 1)
    law = np.zeros(n + 1)
    law[0] = 1.0
    for j in range(1, n + 1):
        nxt = np.zeros(n + 1)
        nxt[1:] += rate.alpha * law[:-1]
        nxt[:-1] += rate.mu * law[1:]
        nxt[0] += rate.mu * law[0]
        nxt[(levels < lower[j]) | (levels > upper[j])] = 0.0
        law = nxt
    return float(law.sum())


def half_harmonic_gap(n: Union[int, np.ndarray]) -> np.ndarray:
    """n·Σ_{ℓ=n/2+1..n} 1/ℓ - (n log 2 - 1) for even n; nonnegative"""
    n = np.asarray(n, dtype=np.int64)
    if np.any(n % 2) or np.any(n < 2):
        raise ValueError("half-harmonic sums need even n >= 2")
    top = int(n.max())
    harmonic = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, top + 1))))
    sums = n * (harmonic[n] - harmonic[n // 2])
    return sums - (n * math.log(2.0) - 1.0)


def half_harmonic_sum(n: int) -> float:
    """n·Σ_{ℓ=n/2+1..n} 1/ℓ"""
    return float(n * math.fsum(1.0 / l for l in range(n // 2 + 1, n + 1)))


def sigma_inequalities(rate: RateFunction, n_grid: int = 10_001) -> dict:
    """
    Slack in σ ≥ 1 - δ, exp(σx) ≤ 1 + x on [0, 2δ], and, for α > 1/3,
    2σ log 2 > δ/(2α). Every entry is nonnegative (positive for the last) when
    the inequalities hold.
    """
    delta, sigma = rate.delta, rate.sigma
    x = np.linspace(0.0, 2.0 * delta, n_grid)
    result = {
        "sigma_minus_one_minus_delta": sigma - (1.0 - delta),
        "min_exp_slack": float(np.min(1.0 + x - np.exp(sigma * x))),
        "sigma_delta_margin": None,
    }
    if rate.alpha > 1.0 / 3.0:
        result["sigma_delta_margin"] = 2.0 * sigma * math.log(2.0) - delta / (2.0 * rate.alpha)
    return result


def product_lower_bound(rate: RateFunction, epsilon: float, n: int) -> float:
    """
    n·exponent + 2n(log 2 - ε)δσ: large-n proxy for the log lower bound on
    E[Π(1 + α_k[Q_k - η - 1])²] from excursions into R_ε. Positive growth in n
    means the second moment diverges.
    """
    exponent = ldp_exponent(rate, epsilon).value
    return n * exponent + 2.0 * n * (math.log(2.0) - epsilon) * rate.delta * rate.sigma
