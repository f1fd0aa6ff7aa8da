"""Step-size schedule α_n = g·n^{-ρ}, its clock τ_k and block structure"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from markovsa.errors import InvalidExponent, InvalidSchedule

logger = logging.getLogger(__name__)

ArrayLike = Union[int, float, np.ndarray, Sequence[int]]

# Exact clock sums are accumulated over chunks of this many terms
TAU_CHUNK = 1_000_000


@dataclass(frozen=True)
class StepSizeSchedule:
    """
    α_n = gain·n^{-ρ} with 1/2 < ρ ≤ 1, and block length T on the τ clock.

    Accessors take integer indices n ≥ 1 (scalars or arrays); α_0 is unused.
    """
    rho: float
    gain: float
    T: float = 1.0

    def alpha(self, n: ArrayLike) -> Union[float, np.ndarray]:
        idx = np.asarray(n, dtype=np.float64)
        if np.any(idx < 1):
            raise ValueError("alpha(n) is defined for n >= 1")
        value = self.gain * idx ** (-self.rho)
        return float(value) if value.ndim == 0 else value

    def unit_alpha(self, n: ArrayLike) -> Union[float, np.ndarray]:
        """n^{-ρ}: the step size once the gain is moved into the field"""
        value = np.asarray(self.alpha(n)) / self.gain
        return float(value) if value.ndim == 0 else value

    def tau(self, k: int) -> float:
        """τ_k = Σ_{i=1..k} α_i, summed exactly in chunks"""
        k = int(k)
        if k < 0:
            raise ValueError("tau(k) needs k >= 0")
        partials = []
        for start in range(1, k + 1, TAU_CHUNK):
            stop = min(start + TAU_CHUNK, k + 1)
            steps = self.gain * np.arange(start, stop, dtype=np.float64) ** (-self.rho)
            partials.append(float(np.sum(steps)))
        return math.fsum(partials)

    def taus(self, K: int) -> np.ndarray:
        """τ_0..τ_K as an array"""
        steps = self.gain * np.arange(1, int(K) + 1, dtype=np.float64) ** (-self.rho)
        return np.concatenate(([0.0], np.cumsum(steps)))

    def gamma(self, n: ArrayLike) -> Union[float, np.ndarray]:
        """γ_n = 1/α_{n+1} - 1/α_n"""
        idx = np.asarray(n, dtype=np.float64)
        if np.any(idx < 1):
            raise ValueError("gamma(n) is defined for n >= 1")
        # (n+1)^ρ - n^ρ without cancellation
        value = idx ** self.rho * np.expm1(self.rho * np.log1p(1.0 / idx)) / self.gain
        return float(value) if value.ndim == 0 else value

    @property
    def gamma_limit(self) -> float:
        """γ = lim γ_n: 1/g for ρ = 1, else 0"""
        return 1.0 / self.gain if self.rho == 1.0 else 0.0

    @property
    def unit_gamma(self) -> float:
        """γ for the unit-step form: 1 for ρ = 1, else 0"""
        return self.gain * self.gamma_limit

    @property
    def n_min(self) -> int:
        """First n with α_n ≤ 1"""
        if self.gain <= 1.0:
            return 1
        n = max(1, int(math.floor(self.gain ** (1.0 / self.rho))))
        while self.alpha(n) > 1.0:
            n += 1
        return n

    def alpha_bar(self, start: int = 1) -> float:
        """sup_{n ≥ start} α_n"""
        return float(self.alpha(max(1, int(start))))

    def block_starts(self, taus: np.ndarray) -> np.ndarray:
        """m_0 = 0, m_{n+1} = min{k : τ_k ≥ τ_{m_n} + T}, for blocks fully covered by `taus`"""
        starts = [0]
        last = len(taus) - 1
        while True:
            nxt = int(np.searchsorted(taus, taus[starts[-1]] + self.T, side="left"))
            if nxt > last:
                break
            starts.append(nxt)
        return np.asarray(starts, dtype=np.int64)

    def window_end(self, n: int, taus: np.ndarray, length: Optional[float] = None) -> Optional[int]:
        """w_n = min{k : τ_k ≥ τ_n + T}; None if `taus` stops short"""
        span = self.T if length is None else length
        k = int(np.searchsorted(taus, taus[n] + span, side="left"))
        return k if k < len(taus) else None

    def step_at_clock(self, target: float, start: int = 1) -> int:
        """Smallest k ≥ start with τ_k ≥ target, found by walking chunks of the clock"""
        tau = self.tau(start)
        if tau >= target:
            return start
        k = start
        while True:
            steps = self.gain * np.arange(k + 1, k + 1 + TAU_CHUNK, dtype=np.float64) ** (-self.rho)
            clock = tau + np.cumsum(steps)
            hit = int(np.searchsorted(clock, target, side="left"))
            if hit < len(clock):
                return k + 1 + hit
            tau = float(clock[-1])
            k += TAU_CHUNK

    def step_difference_residual(self, k: np.ndarray) -> np.ndarray:
        """|α_k - α_{k+1}| - γ_k α_k α_{k+1}, zero up to rounding"""
        a_k = np.asarray(self.alpha(k))
        a_next = np.asarray(self.alpha(np.asarray(k) + 1))
        return np.abs(a_k - a_next) - np.asarray(self.gamma(k)) * a_k * a_next

    def sqrt_ratio_remainder(self, k: np.ndarray) -> np.ndarray:
        """[√(α_k/α_{k+1}) - (1 + γ_k α_k/2)] / α_k², bounded in k"""
        k = np.asarray(k, dtype=np.float64)
        a_k = np.asarray(self.alpha(k))
        # √(α_k/α_{k+1}) - 1 = expm1(ρ/2 · log1p(1/k))
        gap = np.expm1(0.5 * self.rho * np.log1p(1.0 / k)) - 0.5 * np.asarray(self.gamma(k)) * a_k
        return gap / a_k**2

    def variation_tail(self, start: int) -> float:
        """Σ_{n ≥ start} |α_{n+1} - α_n| = α_start, since α is decreasing"""
        return self.alpha_bar(start)

    def check_summability(self, decades: int = 8) -> Dict[str, List[float]]:
        """
        Partial sums of α_n and α_n² at N = 10^1..10^decades.

        Σα grows without bound while Σα² settles; `alpha_sq_tail` is the
        integral bound g²N^{1-2ρ}/(2ρ-1) on what remains of Σα² past N.
        """
        horizons = [10**j for j in range(1, decades + 1)]
        alpha_sums: List[float] = []
        alpha_sq_sums: List[float] = []
        tails: List[float] = []
        running = 0.0
        running_sq = 0.0
        previous = 0
        for N in horizons:
            for start in range(previous + 1, N + 1, TAU_CHUNK):
                stop = min(start + TAU_CHUNK, N + 1)
                steps = self.gain * np.arange(start, stop, dtype=np.float64) ** (-self.rho)
                running += float(np.sum(steps))
                running_sq += float(np.sum(steps**2))
            previous = N
            alpha_sums.append(running)
            alpha_sq_sums.append(running_sq)
            tails.append(self.gain**2 * N ** (1.0 - 2.0 * self.rho) / (2.0 * self.rho - 1.0))
        return {
            "N": [float(N) for N in horizons],
            "alpha_sum": alpha_sums,
            "alpha_sq_sum": alpha_sq_sums,
            "alpha_sq_tail": tails,
        }


def make_schedule(rho: float, gain: float, T: float = 1.0) -> StepSizeSchedule:
    """Validated schedule; InvalidExponent unless 1/2 < ρ ≤ 1"""
    if not (0.5 < rho <= 1.0):
        raise InvalidExponent(f"rho must lie in (1/2, 1], got {rho}")
    if not gain > 0.0:
        raise InvalidSchedule(f"gain must be positive, got {gain}")
    if not T > 0.0:
        raise InvalidSchedule(f"block length T must be positive, got {T}")
    schedule = StepSizeSchedule(rho=float(rho), gain=float(gain), T=float(T))
    if schedule.n_min > 1:
        logger.info(f"gain {gain} gives alpha_n > 1 before n = {schedule.n_min}")
    return schedule
