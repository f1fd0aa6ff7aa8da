"""Fixed-step RK4 flows of mean-field ODEs, Euler curves and restarted ODEs"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from markovsa.config import get_settings
from markovsa.errors import BlockOutOfRange
from markovsa.sa.engine import Trajectory
from markovsa.sa.schedule import StepSizeSchedule

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]


class OdeSolver:
    """
    d/dt ϑ = field(ϑ), integrated by classical RK4 with step h.

    States are d-vectors or (B, d) batches; the field must accept batches.
    """

    def __init__(self, field: VectorField, step: Optional[float] = None):
        self.field = field
        self.step = get_settings().ode_step if step is None else float(step)
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step}")

    def rk4_step(self, theta: np.ndarray, h: float) -> np.ndarray:
        k1 = self.field(theta)
        k2 = self.field(theta + 0.5 * h * k1)
        k3 = self.field(theta + 0.5 * h * k2)
        k4 = self.field(theta + h * k3)
        return theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(self, theta: np.ndarray, duration: float, step: Optional[float] = None) -> np.ndarray:
        """Flow for `duration`, split into equal substeps no longer than the step"""
        if duration < 0:
            raise ValueError("duration must be nonnegative")
        if duration == 0:
            return np.array(theta, dtype=np.float64)
        h_max = self.step if step is None else step
        n_sub = max(1, math.ceil(duration / h_max - 1e-9))
        h = duration / n_sub
        state = np.asarray(theta, dtype=np.float64)
        for _ in range(n_sub):
            state = self.rk4_step(state, h)
        return state

    def flow(self, theta0: np.ndarray, t: float) -> np.ndarray:
        """φ(t; θ0)"""
        return self.advance(theta0, t)

    def integrate(self, theta0: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """Flow sampled at increasing `times` ≥ 0; output has a leading time axis"""
        points = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(points) < 0) or points[0] < 0:
            raise ValueError("times must be nonnegative and nondecreasing")
        state = np.asarray(theta0, dtype=np.float64)
        out = np.empty((len(points),) + state.shape)
        previous = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for i, t in enumerate(points):
                state = self.advance(state, t - previous)
                out[i] = state
                previous = t
        return out

    def integrate_on_clock(self, theta0: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """Flow sampled at clock points τ_k, started at taus[0]"""
        taus = np.asarray(taus, dtype=np.float64)
        return self.integrate(theta0, taus - taus[0])

    def halving_gap(self, theta0: np.ndarray, t: float) -> float:
        """‖φ_h(t) - φ_{h/2}(t)‖_∞: the step-halving convergence check"""
        coarse = self.advance(theta0, t, step=self.step)
        fine = self.advance(theta0, t, step=0.5 * self.step)
        return float(np.abs(coarse - fine).max())


def _field_of(mean_field) -> VectorField:
    return getattr(mean_field, "fbar", mean_field)


def euler_curve(
    mean_field,
    theta0: Sequence[float],
    schedule: StepSizeSchedule,
    K: int,
) -> np.ndarray:
    """θ̄_{n+1} = θ̄_n + α_{n+1} f̄(θ̄_n) for n < K; rows θ̄_0..θ̄_K"""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    field = _field_of(mean_field)
    theta = np.asarray(theta0, dtype=np.float64).reshape(1, -1)
    alphas = np.asarray(schedule.alpha(np.arange(1, K + 1)))
    curve = np.empty((K + 1, theta.shape[1]))
    curve[0] = theta[0]
    for n in range(K):
        theta = theta + alphas[n] * field(theta)
        curve[n + 1] = theta[0]
    return curve


@dataclass
class RestartedOde:
    """ϑ^{(n)} on block n, sampled at the SA clock points τ_{m_n}..τ_{m_{n+1}}"""
    block: int
    steps: np.ndarray
    taus: np.ndarray
    theta: np.ndarray
    ode: np.ndarray

    @property
    def sup_gap(self) -> float:
        """sup over the block of ‖θ_k - ϑ^{(n)}_{τ_k}‖"""
        return float(np.linalg.norm(self.theta - self.ode, axis=1).max())


def solve_restarted_ode(
    mean_field,
    trajectory: Trajectory,
    n_block: int,
    step: Optional[float] = None,
) -> RestartedOde:
    """ODE restarted at θ_{m_n} and followed along the SA clock to the end of block n"""
    taus = trajectory.taus
    starts = trajectory.schedule.block_starts(taus)
    if n_block < 0 or n_block + 1 >= len(starts):
        raise BlockOutOfRange(
            f"block {n_block} not covered: trajectory has {max(len(starts) - 1, 0)} full blocks"
        )
    lo, hi = int(starts[n_block]), int(starts[n_block + 1])
    solver = OdeSolver(_field_of(mean_field), step=step)
    ode = solver.integrate_on_clock(trajectory.theta[lo], taus[lo : hi + 1])
    return RestartedOde(
        block=n_block,
        steps=np.arange(lo, hi + 1),
        taus=taus[lo : hi + 1],
        theta=trajectory.theta[lo : hi + 1],
        ode=ode,
    )
