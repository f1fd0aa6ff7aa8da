"""SA recursion driven by a Markov chain: batched Monte Carlo and single recorded runs"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from markovsa.config import get_settings
from markovsa.rng import INITIAL_STREAM, run_generator
from markovsa.sa.problem import SAProblem
from markovsa.sa.schedule import StepSizeSchedule

logger = logging.getLogger(__name__)

# Smallest number of runs worth a thread of their own
MIN_RUNS_PER_SHARD = 64


@dataclass
class BatchResult:
    """
    Outcome of a lockstep batch of SA runs.

    `checkpoint_theta[j]` holds θ at step `checkpoints[j]` for every run;
    `window_theta` / `window_states` cover steps window_start..window_start+K.
    A run that produced a non-finite iterate has `blew_up` set and
    `blowup_step` at the first such step (-1 otherwise).
    """
    seed: int
    run_indices: np.ndarray
    n_steps: int
    final_theta: np.ndarray
    final_state: np.ndarray
    max_abs_theta: np.ndarray
    max_state: np.ndarray
    blew_up: np.ndarray
    blowup_step: np.ndarray
    checkpoints: List[int] = field(default_factory=list)
    checkpoint_theta: Optional[np.ndarray] = None
    window_start: Optional[int] = None
    window_theta: Optional[np.ndarray] = None
    window_states: Optional[np.ndarray] = None
    window_noise: Optional[np.ndarray] = None

    @property
    def n_runs(self) -> int:
        return len(self.run_indices)

    @property
    def blowup_fraction(self) -> float:
        return float(np.mean(self.blew_up)) if self.n_runs else 0.0


@dataclass
class Trajectory:
    """One recorded run: θ_0..θ_N, Φ_0..Φ_N and the additive noise W_1..W_N (row 0 is zero)"""
    theta: np.ndarray
    states: np.ndarray
    noise: np.ndarray
    schedule: StepSizeSchedule
    problem: SAProblem
    seed: int
    run_index: int = 0
    blew_up: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.theta) - 1

    @property
    def taus(self) -> np.ndarray:
        return self.schedule.taus(self.n_steps)

    def increments(self) -> np.ndarray:
        """α_{n+1}[f(θ_n, Φ_{n+1}) + W_{n+1}] recomputed from the record"""
        alphas = np.asarray(self.schedule.alpha(np.arange(1, self.n_steps + 1)))
        drift = self.problem.f(self.theta[:-1], self.states[1:])
        return alphas[:, None] * (drift + self.problem.noise_std * self.noise[1:])

    def reconstruction_residual(self) -> float:
        """max_n ‖θ_{n+1} - θ_n - α_{n+1}[f(θ_n, Φ_{n+1}) + W_{n+1}]‖_∞"""
        if self.n_steps == 0:
            return 0.0
        gap = self.theta[1:] - self.theta[:-1] - self.increments()
        return float(np.abs(gap).max())

    def to_csv(self, path: Union[str, Path]) -> None:
        """Columns step, tau, state, theta_0..theta_{d-1}"""
        dim = self.theta.shape[1]
        steps = np.arange(self.n_steps + 1)
        table = np.column_stack([steps, self.taus, self.states, self.theta])
        header = ",".join(["step", "tau", "state"] + [f"theta_{i}" for i in range(dim)])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def initial_thetas(
    seed: int,
    n_runs: int,
    dim: int,
    mean: Union[float, Sequence[float]] = 0.0,
    std: float = 0.0,
    run_offset: int = 0,
) -> np.ndarray:
    """θ_0 per run, N(mean, std²) from each run's initial-state stream"""
    center = np.broadcast_to(np.asarray(mean, dtype=np.float64), (dim,))
    thetas = np.tile(center, (n_runs, 1))
    if std > 0.0:
        for r in range(n_runs):
            rng = run_generator(seed, run_offset + r, stream=INITIAL_STREAM)
            thetas[r] += std * rng.standard_normal(dim)
    return thetas


def draw_block(
    generators: Sequence[np.random.Generator], block_size: int, dim: int
) -> Tuple[np.ndarray, np.ndarray]:
    """One block of draws per run: `block_size` uniforms, then `block_size`×dim normals"""
    uniforms = np.empty((len(generators), block_size))
    normals = np.empty((len(generators), block_size, dim))
    for r, rng in enumerate(generators):
        uniforms[r] = rng.random(block_size)
        normals[r] = rng.standard_normal((block_size, dim))
    return uniforms, normals


def shard_bounds(n_runs: int, workers: int) -> List[Tuple[int, int]]:
    count = max(1, min(workers, math.ceil(n_runs / MIN_RUNS_PER_SHARD)))
    bounds = np.linspace(0, n_runs, count + 1).round().astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _simulate_shard(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    theta0: np.ndarray,
    n_steps: int,
    seed: int,
    run_indices: np.ndarray,
    checkpoints: Sequence[int],
    window: Optional[Tuple[int, int]],
    block_size: int,
) -> Dict[str, np.ndarray]:
    n_runs, dim = theta0.shape
    generators = [run_generator(seed, int(r)) for r in run_indices]
    theta = theta0.copy()
    states = np.full(n_runs, problem.initial_state, dtype=np.int64)
    max_abs = np.abs(theta).max(axis=1)
    max_state = states.copy()
    blowup_step = np.full(n_runs, -1, dtype=np.int64)

    wanted = {int(c): j for j, c in enumerate(checkpoints)}
    checkpoint_theta = np.full((len(checkpoints), n_runs, dim), np.nan)
    if 0 in wanted:
        checkpoint_theta[wanted[0]] = theta

    window_theta = window_states = window_noise = None
    if window is not None:
        w_start, w_len = window
        window_theta = np.full((w_len + 1, n_runs, dim), np.nan)
        window_states = np.zeros((w_len + 1, n_runs), dtype=np.int64)
        window_noise = np.zeros((w_len + 1, n_runs, dim))
        if w_start == 0:
            window_theta[0] = theta
            window_states[0] = states

    with np.errstate(over="ignore", invalid="ignore"):
        for block_start in range(0, n_steps, block_size):
            length = min(block_size, n_steps - block_start)
            # Every run consumes a full block even when fewer steps remain
            uniforms, normals = draw_block(generators, block_size, dim)
            alphas = np.asarray(schedule.alpha(np.arange(block_start + 1, block_start + length + 1)))

            for j in range(length):
                n = block_start + j + 1
                states = problem.chain.step(states, uniforms[:, j])
                drift = problem.f(theta, states)
                if problem.noise_std > 0.0:
                    drift = drift + problem.noise_std * normals[:, j, :]
                theta = theta + alphas[j] * drift

                size = np.abs(theta).max(axis=1)
                max_abs = np.fmax(max_abs, size)
                np.maximum(max_state, states, out=max_state)
                fresh = ~np.isfinite(size) & (blowup_step < 0)
                if fresh.any():
                    blowup_step[fresh] = n
                if n in wanted:
                    checkpoint_theta[wanted[n]] = theta
                if window is not None and w_start <= n <= w_start + w_len:
                    window_theta[n - w_start] = theta
                    window_states[n - w_start] = states
                    window_noise[n - w_start] = normals[:, j, :]

    return {
        "final_theta": theta,
        "final_state": states,
        "max_abs_theta": np.where(blowup_step >= 0, np.inf, max_abs),
        "max_state": max_state,
        "blowup_step": blowup_step,
        "checkpoint_theta": checkpoint_theta,
        "window_theta": window_theta,
        "window_states": window_states,
        "window_noise": window_noise,
    }


def simulate_batch(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    theta0: np.ndarray,
    n_steps: int,
    seed: int,
    n_runs: Optional[int] = None,
    run_offset: int = 0,
    checkpoints: Sequence[int] = (),
    window: Optional[Tuple[int, int]] = None,
    threads: Optional[int] = None,
    block_size: Optional[int] = None,
) -> BatchResult:
    """
    Run the recursion for many runs in lockstep.

    theta0 is a d-vector shared by all runs or an (n_runs, d) array. Run r
    draws from stream (seed, run_offset + r), so every run's path is the
    same whatever the thread count or batch split. `window=(start, K)`
    records θ, Φ and W for steps start..start+K.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    settings = get_settings()
    block = block_size or settings.block_size
    start0 = np.asarray(theta0, dtype=np.float64)
    if start0.ndim == 1:
        if n_runs is None:
            raise ValueError("n_runs is required when theta0 is a single vector")
        start0 = np.tile(start0.reshape(1, problem.dim), (n_runs, 1))
    n_runs = start0.shape[0]
    if start0.shape[1] != problem.dim:
        raise ValueError(f"theta0 has dimension {start0.shape[1]}, problem has {problem.dim}")
    if window is not None and window[0] + window[1] > n_steps:
        raise ValueError("recording window runs past n_steps")
    bad = [c for c in checkpoints if not 0 <= c <= n_steps]
    if bad:
        raise ValueError(f"checkpoints outside [0, {n_steps}]: {bad}")

    run_indices = np.arange(run_offset, run_offset + n_runs, dtype=np.int64)
    shards = shard_bounds(n_runs, settings.worker_count(threads))
    logger.debug(
        f"simulate_batch: {problem.name} runs={n_runs} steps={n_steps} shards={len(shards)}"
    )

    def run(bounds: Tuple[int, int]) -> Dict[str, np.ndarray]:
        lo, hi = bounds
        return _simulate_shard(
            problem,
            schedule,
            start0[lo:hi],
            n_steps,
            seed,
            run_indices[lo:hi],
            list(checkpoints),
            window,
            block,
        )

    if len(shards) == 1:
        parts = [run(shards[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            parts = list(pool.map(run, shards))

    def joined(key: str, axis: int = 0) -> Optional[np.ndarray]:
        if parts[0][key] is None:
            return None
        return np.concatenate([p[key] for p in parts], axis=axis)

    blowup_step = joined("blowup_step")
    return BatchResult(
        seed=seed,
        run_indices=run_indices,
        n_steps=n_steps,
        final_theta=joined("final_theta"),
        final_state=joined("final_state"),
        max_abs_theta=joined("max_abs_theta"),
        max_state=joined("max_state"),
        blew_up=blowup_step >= 0,
        blowup_step=blowup_step,
        checkpoints=[int(c) for c in checkpoints],
        checkpoint_theta=joined("checkpoint_theta", axis=1),
        window_start=None if window is None else int(window[0]),
        window_theta=joined("window_theta", axis=1),
        window_states=joined("window_states", axis=1),
        window_noise=joined("window_noise", axis=1),
    )


def run_sa(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    theta0: Sequence[float],
    n_steps: int,
    seed: int,
    run_index: int = 0,
) -> Trajectory:
    """
    Single recorded run of θ_{n+1} = θ_n + α_{n+1}[f(θ_n, Φ_{n+1}) + W_{n+1}].

    If an iterate becomes non-finite the trajectory is cut just before it
    and returned with `blew_up` set.
    """
    start = np.asarray(theta0, dtype=np.float64).reshape(1, problem.dim)
    batch = simulate_batch(
        problem,
        schedule,
        start,
        n_steps,
        seed,
        run_offset=run_index,
        window=(0, n_steps),
        threads=1,
    )
    theta = batch.window_theta[:, 0, :]
    states = batch.window_states[:, 0]
    noise = batch.window_noise[:, 0, :]
    blew_up = bool(batch.blew_up[0])
    if blew_up:
        cut = int(batch.blowup_step[0])
        logger.warning(f"run {run_index}: non-finite iterate at step {cut}, trajectory truncated")
        theta, states, noise = theta[:cut], states[:cut], noise[:cut]
    return Trajectory(
        theta=theta,
        states=states,
        noise=noise,
        schedule=schedule,
        problem=problem,
        seed=seed,
        run_index=run_index,
        blew_up=blew_up,
    )


def interpolate(taus: np.ndarray, thetas: np.ndarray, t: Union[float, np.ndarray]) -> np.ndarray:
    """Θ_t: piecewise-linear interpolation of θ_k placed at clock times τ_k"""
    thetas = np.asarray(thetas, dtype=np.float64)
    points = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if points.min() < taus[0] or points.max() > taus[-1]:
        raise ValueError("interpolation time outside the recorded clock range")
    columns = [np.interp(points, taus, thetas[:, i]) for i in range(thetas.shape[1])]
    out = np.stack(columns, axis=-1)
    return out[0] if np.ndim(t) == 0 else out
