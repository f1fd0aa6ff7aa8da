"""
SA driven by the uniformized M/M/1 queue.

    θ_{n+1} = θ_n + 1/(n+1)·{(Q_{n+1} - η - 1)θ_n + W_{n+1}},  η = ρ/(1-ρ)

The mean field is -θ, so θ_n → 0, yet for load above ½ the second moment
of θ_n diverges. Overflow is data here: runs that leave the float range are
flagged, never raised.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from markovsa.asymptotics.experiments import TRIM_SIGMAS, histogram, second_moment, trim_mask
from markovsa.config import get_settings
from markovsa.errors import ConfigError
from markovsa.markov.chains import MM1Chain
from markovsa.rng import run_generator
from markovsa.runlog import run_logger
from markovsa.sa.engine import Trajectory, draw_block, shard_bounds, simulate_batch
from markovsa.sa.problem import SAProblem, mm1_problem
from markovsa.sa.schedule import StepSizeSchedule, make_schedule

logger = logging.getLogger(__name__)

# |θ| beyond this at any step counts as a heavy excursion
EXCEED_THRESHOLD = 1e10


@dataclass
class CounterexampleConfig:
    load: float
    n_steps: int
    n_runs: int
    seed: int
    theta0: float = 1.0
    noise_std: float = 1.0
    exceed_threshold: float = EXCEED_THRESHOLD
    trim_sigmas: float = TRIM_SIGMAS

    def __post_init__(self):
        if not 0.0 < self.load < 1.0:
            raise ConfigError(f"load must lie in (0, 1) for an ergodic queue, got {self.load}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_runs < 2:
            raise ConfigError("n_runs must be ≥ 2")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")

    @property
    def alpha(self) -> float:
        """Arrival probability ρ/(1+ρ)"""
        return self.load / (1.0 + self.load)

    @property
    def mu(self) -> float:
        return 1.0 / (1.0 + self.load)

    @property
    def eta(self) -> float:
        return self.load / (1.0 - self.load)

    def problem(self) -> SAProblem:
        return mm1_problem(self.load, noise_std=self.noise_std)

    def schedule(self) -> StepSizeSchedule:
        return make_schedule(rho=1.0, gain=1.0)


@dataclass
class CounterexampleResult:
    config: CounterexampleConfig
    z: np.ndarray
    final_theta: np.ndarray
    max_abs_theta: np.ndarray
    blew_up: np.ndarray
    exceeded: np.ndarray
    kept: np.ndarray
    sigma_theta_theory: float
    trimmed_var: float
    raw_var: float
    histogram: Dict[str, np.ndarray]

    @property
    def n_outliers(self) -> int:
        return int(len(self.kept) - self.kept.sum())

    @property
    def blowup_fraction(self) -> float:
        return float(np.mean(self.blew_up))

    @property
    def exceed_fraction(self) -> float:
        return float(np.mean(self.exceeded))

    def per_run_table(self) -> np.ndarray:
        """Rows run_id, final_theta, max_abs_theta, blew_up"""
        return np.column_stack([
            np.arange(len(self.final_theta)),
            self.final_theta,
            self.max_abs_theta,
            self.blew_up.astype(np.float64),
        ])


def run_counterexample(config: CounterexampleConfig, threads: Optional[int] = None) -> CounterexampleResult:
    """
    z_N = √N·θ_N over a batch, with trimmed and raw variances.

    The CLT scale is Σ_θ = σ_W² (F = -½, f(0, Q) = 0), so the trim rule
    drops |z| beyond trim_sigmas·σ_W. Non-finite runs are outliers.
    """
    started = time.time()
    batch = simulate_batch(
        config.problem(),
        config.schedule(),
        np.array([config.theta0]),
        config.n_steps,
        config.seed,
        n_runs=config.n_runs,
        threads=threads,
    )
    final = batch.final_theta[:, 0]
    with np.errstate(invalid="ignore", over="ignore"):
        z = math.sqrt(config.n_steps) * batch.final_theta
    sigma_theta = config.noise_std**2
    kept = trim_mask(z, np.array([math.sqrt(sigma_theta)]), config.trim_sigmas)
    finite = np.all(np.isfinite(z), axis=1)
    exceeded = batch.max_abs_theta > config.exceed_threshold

    result = CounterexampleResult(
        config=config,
        z=z[:, 0],
        final_theta=final,
        max_abs_theta=batch.max_abs_theta,
        blew_up=batch.blew_up,
        exceeded=exceeded,
        kept=kept,
        sigma_theta_theory=sigma_theta,
        trimmed_var=float(second_moment(z[kept])[0, 0]),
        raw_var=float(second_moment(z[finite])[0, 0]),
        histogram=histogram(z[kept, 0]),
    )
    if result.blew_up.any():
        logger.info(f"load {config.load}: {int(result.blew_up.sum())} runs left the float range")
    run_logger.log_batch(
        experiment="counterexample",
        seed=config.seed,
        n_runs=config.n_runs,
        n_steps=config.n_steps,
        stats={
            "load": config.load,
            "outliers": result.n_outliers,
            "blowup_fraction": result.blowup_fraction,
            "exceed_fraction": result.exceed_fraction,
        },
        latency_ms=(time.time() - started) * 1000,
    )
    return result


def log_products(states: np.ndarray, alphas: np.ndarray, shift: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Running log|Π_{k≤n}(1 + α_k(Q_k - shift))| and its sign along axis -1.

    A zero factor gives log -inf and sign 0 from then on.
    """
    factors = 1.0 + alphas * (np.asarray(states, dtype=np.float64) - shift)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(factors))
    return np.cumsum(logs, axis=-1), np.cumprod(np.sign(factors), axis=-1)


@dataclass
class ProductMomentEstimate:
    """
    log E[Π_{k≤n}(1 + α_k(Q_k - η - 1))²] per grid point.

    `log_stderr` is the relative standard error of the mean, i.e. the
    standard error on the log scale to first order.
    """
    n_grid: List[int]
    log_mean: np.ndarray
    log_stderr: np.ndarray
    negative_fraction: np.ndarray
    n_runs: int

    def increasing(self, n_se: float = 2.0) -> bool:
        """Whether each estimate exceeds the previous one up to n_se combined standard errors"""
        for j in range(1, len(self.n_grid)):
            slack = n_se * math.hypot(self.log_stderr[j], self.log_stderr[j - 1])
            if self.log_mean[j] < self.log_mean[j - 1] - slack:
                return False
        return True

    def growth_rates(self) -> np.ndarray:
        """Slope of log_mean against log n between consecutive grid points"""
        return np.diff(self.log_mean) / np.diff(np.log(self.n_grid))


def _estimate(log_abs: np.ndarray, signs: np.ndarray, n_grid: Sequence[int]) -> ProductMomentEstimate:
    """log_abs and signs have shape (grid, runs)"""
    n_runs = log_abs.shape[1]
    doubled = 2.0 * log_abs
    log_mean = logsumexp(doubled, axis=1) - math.log(n_runs)
    top = np.max(doubled, axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        weights = np.exp(doubled - np.where(np.isfinite(top), top, 0.0))
        rel = weights.std(axis=1, ddof=1) / (weights.mean(axis=1) * math.sqrt(n_runs))
    return ProductMomentEstimate(
        n_grid=[int(n) for n in n_grid],
        log_mean=log_mean,
        log_stderr=rel,
        negative_fraction=np.mean(signs < 0, axis=1),
        n_runs=n_runs,
    )


def _check_grid(n_grid: Sequence[int]) -> List[int]:
    grid = [int(n) for n in n_grid]
    if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"n_grid must be increasing positive integers, got {list(n_grid)}")
    return grid


def product_moment_from_paths(
    queue_paths: np.ndarray,
    eta: float,
    n_grid: Sequence[int],
    schedule: Optional[StepSizeSchedule] = None,
) -> ProductMomentEstimate:
    """Product moments over given queue paths Q_1..Q_N, shape (runs, N)"""
    grid = _check_grid(n_grid)
    paths = np.atleast_2d(queue_paths)
    if grid[-1] > paths.shape[1]:
        raise ValueError(f"n_grid reaches {grid[-1]} but paths have {paths.shape[1]} steps")
    schedule = schedule or make_schedule(rho=1.0, gain=1.0)
    alphas = np.asarray(schedule.alpha(np.arange(1, grid[-1] + 1)))
    log_abs, signs = log_products(paths[:, : grid[-1]], alphas, eta + 1.0)
    idx = np.asarray(grid) - 1
    return _estimate(log_abs[:, idx].T, signs[:, idx].T, grid)


def _product_shard(
    chain: MM1Chain,
    schedule: StepSizeSchedule,
    shift: float,
    seed: int,
    run_indices: np.ndarray,
    grid: List[int],
    block_size: int,
) -> Tuple[np.ndarray, np.ndarray]:
    generators = [run_generator(seed, int(r)) for r in run_indices]
    states = np.zeros(len(run_indices), dtype=np.int64)
    running = np.zeros(len(run_indices))
    sign = np.ones(len(run_indices))
    log_abs = np.zeros((len(grid), len(run_indices)))
    signs = np.zeros((len(grid), len(run_indices)))
    slot = 0
    n_steps = grid[-1]
    for block_start in range(0, n_steps, block_size):
        length = min(block_size, n_steps - block_start)
        # Same draws as simulate_batch, so the queue paths coincide
        uniforms, _ = draw_block(generators, block_size, 1)
        path = np.empty((len(run_indices), length), dtype=np.int64)
        for j in range(length):
            states = chain.step(states, uniforms[:, j])
            path[:, j] = states
        alphas = np.asarray(schedule.alpha(np.arange(block_start + 1, block_start + length + 1)))
        logs, block_signs = log_products(path, alphas, shift)
        while slot < len(grid) and grid[slot] <= block_start + length:
            offset = grid[slot] - block_start - 1
            log_abs[slot] = running + logs[:, offset]
            signs[slot] = sign * block_signs[:, offset]
            slot += 1
        running = running + logs[:, -1]
        sign = sign * block_signs[:, -1]
    return log_abs, signs


def product_moment(
    config: CounterexampleConfig,
    n_grid: Sequence[int],
    threads: Optional[int] = None,
    block_size: Optional[int] = None,
) -> ProductMomentEstimate:
    """
    Monte Carlo E[Π(1 + α_k(Q_k - η - 1))²] on the n grid.

    Run r replays the queue of run r in `run_counterexample` with the same
    seed. Products are accumulated as log-magnitudes with a sign.
    """
    grid = _check_grid(n_grid)
    settings = get_settings()
    block = block_size or settings.block_size
    chain = config.problem().chain
    schedule = config.schedule()
    run_indices = np.arange(config.n_runs, dtype=np.int64)
    shards = shard_bounds(config.n_runs, settings.worker_count(threads))

    def run(bounds: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = bounds
        return _product_shard(chain, schedule, config.eta + 1.0, config.seed, run_indices[lo:hi], grid, block)

    if len(shards) == 1:
        parts = [run(shards[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            parts = list(pool.map(run, shards))
    log_abs = np.concatenate([p[0] for p in parts], axis=1)
    signs = np.concatenate([p[1] for p in parts], axis=1)
    estimate = _estimate(log_abs, signs, grid)
    logger.debug(f"product_moment load={config.load}: log means {estimate.log_mean}")
    return estimate


def represent_theta(trajectory: Trajectory, n: Optional[int] = None) -> float:
    """
    θ_n = θ_0·Π_{k≤n} a_k + Σ_{k≤n} α_k W_k·Π_{k<l≤n} a_l with a_k = 1 + α_k(Q_k - η - 1).

    Only for scalar M/M/1 recursions recorded by `run_sa`.
    """
    chain = trajectory.problem.chain
    if not isinstance(chain, MM1Chain) or trajectory.problem.dim != 1:
        raise ValueError("represent_theta needs a scalar M/M/1 trajectory")
    n = trajectory.n_steps if n is None else int(n)
    if not 0 <= n <= trajectory.n_steps:
        raise ValueError(f"n must lie in [0, {trajectory.n_steps}], got {n}")
    if n == 0:
        return float(trajectory.theta[0, 0])
    alphas = np.asarray(trajectory.schedule.alpha(np.arange(1, n + 1)))
    factors = 1.0 + alphas * (trajectory.states[1 : n + 1] - (chain.eta + 1.0))
    # suffix[k] = Π_{l>k} a_l for k = 1..n
    suffix = np.append(np.cumprod(factors[::-1])[::-1][1:], 1.0)
    noise = trajectory.problem.noise_std * trajectory.noise[1 : n + 1, 0]
    return float(trajectory.theta[0, 0] * np.prod(factors) + np.sum(alphas * noise * suffix))


def convergence_profile(config: CounterexampleConfig, checkpoints: Sequence[int], threads: Optional[int] = None) -> np.ndarray:
    """Median |θ_N| across runs at each checkpoint; non-finite runs count as +∞"""
    steps = sorted(int(c) for c in checkpoints)
    batch = simulate_batch(
        config.problem(),
        config.schedule(),
        np.array([config.theta0]),
        steps[-1],
        config.seed,
        n_runs=config.n_runs,
        checkpoints=steps,
        threads=threads,
    )
    sizes = np.abs(batch.checkpoint_theta[:, :, 0])
    sizes = np.where(np.isfinite(sizes), sizes, np.inf)
    return np.median(sizes, axis=1)


def queue_bound_threshold(load: float, epsilon: float) -> float:
    """n_ε = (η + 1)/(ε²δ): beyond it an excursion in R_ε keeps α_ℓ[Q_ℓ - η - 1] within [min{δ, δ(nα_ℓ - 1)}, 2δ]"""
    if not 0.0 < load < 1.0:
        raise ConfigError(f"load must lie in (0, 1), got {load}")
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    alpha = load / (1.0 + load)
    delta = 1.0 - 2.0 * alpha
    eta = load / (1.0 - load)
    return (eta + 1.0) / (epsilon**2 * delta)
