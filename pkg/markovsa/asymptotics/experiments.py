"""Monte Carlo CLT and FCLT experiments against the Lyapunov/OU predictions"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from markovsa.asymptotics.covariance import AsymptoticCovariance, build_asymptotic_covariance
from markovsa.asymptotics.ou import OUProcess
from markovsa.ode.solver import OdeSolver
from markovsa.runlog import run_logger
from markovsa.sa.engine import BatchResult, initial_thetas, simulate_batch
from markovsa.sa.problem import SAProblem
from markovsa.sa.schedule import StepSizeSchedule

logger = logging.getLogger(__name__)

# Default trim rule: drop |z_i| beyond this many standard deviations
TRIM_SIGMAS = 10.0

# 1.4826·MAD estimates a normal standard deviation
MAD_SCALE = 1.4826


@dataclass
class NormalizedErrorSeries:
    """z_k = (θ_k - θ*)/√α̃_k at the recorded checkpoints; z has shape (checkpoints, runs, d)"""
    z: np.ndarray
    checkpoints: List[int]
    theta_star: np.ndarray
    unit_alphas: np.ndarray

    @classmethod
    def from_batch(
        cls, batch: BatchResult, schedule: StepSizeSchedule, theta_star: np.ndarray
    ) -> "NormalizedErrorSeries":
        steps = np.asarray(batch.checkpoints)
        if np.any(steps < 1):
            raise ValueError("normalized errors need checkpoints at steps >= 1")
        unit_alphas = np.asarray(schedule.unit_alpha(steps), dtype=np.float64).reshape(-1)
        star = np.asarray(theta_star, dtype=np.float64)
        with np.errstate(invalid="ignore", over="ignore"):
            z = (batch.checkpoint_theta - star) / np.sqrt(unit_alphas)[:, None, None]
        return cls(z=z, checkpoints=list(batch.checkpoints), theta_star=star, unit_alphas=unit_alphas)

    def reconstruct(self) -> np.ndarray:
        """z·√α̃ + θ*"""
        return self.z * np.sqrt(self.unit_alphas)[:, None, None] + self.theta_star


def trim_mask(z: np.ndarray, scale: Optional[np.ndarray], sigmas: float = TRIM_SIGMAS) -> np.ndarray:
    """
    Runs kept by the trim rule: finite and |z_i| ≤ sigmas·scale_i in every coordinate.

    Without a theoretical scale a robust one (MAD) is used; a zero scale trims nothing.
    """
    finite = np.all(np.isfinite(z), axis=1)
    if scale is None:
        if not finite.any():
            return finite
        centered = z[finite] - np.median(z[finite], axis=0)
        scale = MAD_SCALE * np.median(np.abs(centered), axis=0)
    scale = np.asarray(scale, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        inside = np.all((np.abs(z) <= sigmas * scale) | (scale <= 0), axis=1)
    return finite & inside


def second_moment(z: np.ndarray) -> np.ndarray:
    """E[zzᵀ] about zero; NaN when there is nothing to average"""
    if len(z) == 0:
        return np.full((z.shape[1], z.shape[1]), np.nan)
    return np.einsum("ri,rj->ij", z, z) / len(z)


def _moments(z: np.ndarray) -> Dict[str, List[Optional[float]]]:
    def clean(values) -> List[Optional[float]]:
        return [float(v) if np.isfinite(v) else None for v in np.atleast_1d(values)]

    if len(z) < 2:
        none = [None] * z.shape[1]
        return {"skewness": none, "kurtosis": none}
    with np.errstate(invalid="ignore", divide="ignore"):
        skew = stats.skew(z, axis=0)
        kurt = stats.kurtosis(z, axis=0, fisher=False)
    return {"skewness": clean(skew), "kurtosis": clean(kurt)}


@dataclass
class CltResult:
    z: np.ndarray
    kept: np.ndarray
    sigma_theta_theory: Optional[np.ndarray]
    empirical_var: np.ndarray
    raw_var: np.ndarray
    n_outliers: int
    n_nonfinite: int
    skewness: List[Optional[float]]
    kurtosis: List[Optional[float]]
    histogram: Dict[str, np.ndarray]

    def histogram_table(self) -> np.ndarray:
        """Rows bin_left, bin_right, count, density"""
        h = self.histogram
        return np.column_stack([h["bin_left"], h["bin_right"], h["count"], h["density"]])


def histogram(values: np.ndarray, bins: int = 50) -> Dict[str, np.ndarray]:
    if len(values) == 0:
        empty = np.zeros(0)
        return {"bin_left": empty, "bin_right": empty, "count": empty, "density": empty}
    counts, edges = np.histogram(values, bins=bins)
    widths = np.diff(edges)
    density = counts / (counts.sum() * widths) if counts.sum() else np.zeros_like(widths)
    return {"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts.astype(np.float64), "density": density}


def clt_experiment(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    theta_star: Sequence[float],
    n_runs: int,
    n_steps: int,
    seed: int,
    trim_rule: float = TRIM_SIGMAS,
    theta0_mean: Union[float, Sequence[float]] = 0.0,
    theta0_std: float = 0.0,
    asymptotic: Optional[AsymptoticCovariance] = None,
    bins: int = 50,
    threads: Optional[int] = None,
) -> CltResult:
    """
    z_N over a batch of runs, compared with Σ_θ.

    θ_0 ~ N(theta0_mean, theta0_std²) per run. Non-finite runs count as
    outliers; trimmed and raw second moments are both reported. The
    histogram is of the first coordinate of the kept runs.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be ≥ 2")
    started = time.time()
    star = np.asarray(theta_star, dtype=np.float64).reshape(problem.dim)
    theta0 = initial_thetas(seed, n_runs, problem.dim, mean=theta0_mean, std=theta0_std)
    batch = simulate_batch(
        problem, schedule, theta0, n_steps, seed, checkpoints=[n_steps], threads=threads
    )
    z = NormalizedErrorSeries.from_batch(batch, schedule, star).z[0]

    sigma_theta = None if asymptotic is None else asymptotic.Sigma_theta
    scale = None if sigma_theta is None else np.sqrt(np.clip(np.diag(sigma_theta), 0.0, None))
    kept = trim_mask(z, scale, trim_rule)
    finite = np.all(np.isfinite(z), axis=1)
    moments = _moments(z[kept])

    result = CltResult(
        z=z,
        kept=kept,
        sigma_theta_theory=sigma_theta,
        empirical_var=second_moment(z[kept]),
        raw_var=second_moment(z[finite]),
        n_outliers=int(n_runs - kept.sum()),
        n_nonfinite=int(n_runs - finite.sum()),
        skewness=moments["skewness"],
        kurtosis=moments["kurtosis"],
        histogram=histogram(z[kept, 0], bins=bins),
    )
    run_logger.log_batch(
        experiment="clt",
        seed=seed,
        n_runs=n_runs,
        n_steps=n_steps,
        stats={
            "rho": schedule.rho,
            "gain": schedule.gain,
            "outliers": result.n_outliers,
            "var_trimmed": float(result.empirical_var[0, 0]),
        },
        latency_ms=(time.time() - started) * 1000,
    )
    return result


@dataclass
class FcltResult:
    """
    Second moments of Z^{(n)}_t = (θ_k - ϑ^{(n)}_{τ̃_k})/√α̃_k at the probe offsets t.

    Offsets are on the unit clock τ̃ = τ/g, starting at block m_n.
    """
    block_start: int
    probe_steps: List[int]
    probe_times: np.ndarray
    empirical_cov: np.ndarray
    ou_cov: np.ndarray
    relative_error: List[Optional[float]]
    tolerance: float
    n_runs: int
    n_nonfinite: int
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        final = self.relative_error[-1]
        if final is None:
            return bool(np.allclose(self.empirical_cov[-1], self.ou_cov[-1], atol=1e-12))
        return final <= self.tolerance


def block_start_index(schedule: StepSizeSchedule, n_blocks: int) -> int:
    """m_n for n = n_blocks, walking the clock one block at a time"""
    m = 0
    tau_m = 0.0
    for _ in range(n_blocks):
        m = schedule.step_at_clock(tau_m + schedule.T, start=max(m, 1))
        tau_m = schedule.tau(m)
    return m


def fclt_experiment(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    n_blocks_burnin: int,
    T: float,
    n_runs: int,
    seed: int,
    theta0_mean: Union[float, Sequence[float]] = 0.0,
    theta0_std: float = 0.0,
    probe_fractions: Sequence[float] = (0.25, 0.5, 1.0),
    tolerance: float = 0.25,
    asymptotic: Optional[AsymptoticCovariance] = None,
    threads: Optional[int] = None,
) -> FcltResult:
    """
    Scaled error process after `n_blocks_burnin` blocks, against the OU covariance.

    The ODE is restarted at θ_{m_n} in the unit-step form (field g·f̄) and
    followed for T units of τ̃; relative error is on the first diagonal entry.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be ≥ 2")
    if not T > 0:
        raise ValueError("T must be positive")
    started = time.time()
    asymptotic = asymptotic or build_asymptotic_covariance(problem, schedule, seed=seed)
    ou = OUProcess.from_covariance(asymptotic)

    m = block_start_index(schedule, n_blocks_burnin)
    tau_m = schedule.tau(m)
    probe_steps = [
        schedule.step_at_clock(tau_m + schedule.gain * frac * T, start=max(m, 1)) for frac in probe_fractions
    ]
    logger.info(f"FCLT window: block start m={m}, probe steps {probe_steps}")

    theta0 = initial_thetas(seed, n_runs, problem.dim, mean=theta0_mean, std=theta0_std)
    batch = simulate_batch(
        problem,
        schedule,
        theta0,
        probe_steps[-1],
        seed,
        checkpoints=[m] + probe_steps,
        threads=threads,
    )
    start_theta = batch.checkpoint_theta[0]
    unit_times = np.array([(schedule.tau(k) - tau_m) / schedule.gain for k in probe_steps])

    solver = OdeSolver(problem.mean_field(gain=schedule.gain).fbar)
    ode = solver.integrate(start_theta, unit_times)
    unit_alphas = np.asarray(schedule.unit_alpha(np.asarray(probe_steps)), dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        Z = (batch.checkpoint_theta[1:] - ode) / np.sqrt(unit_alphas)[:, None, None]

    finite = np.all(np.isfinite(Z), axis=(0, 2))
    empirical = np.stack([second_moment(Z[j][finite]) for j in range(len(probe_steps))])
    predicted = np.stack([ou.covariance(t) for t in unit_times])
    relative: List[Optional[float]] = []
    for j in range(len(probe_steps)):
        reference = predicted[j, 0, 0]
        relative.append(
            float(abs(empirical[j, 0, 0] - reference) / reference) if reference > 0 else None
        )

    result = FcltResult(
        block_start=m,
        probe_steps=probe_steps,
        probe_times=unit_times,
        empirical_cov=empirical,
        ou_cov=predicted,
        relative_error=relative,
        tolerance=tolerance,
        n_runs=n_runs,
        n_nonfinite=int(n_runs - finite.sum()),
    )
    run_logger.log_batch(
        experiment="fclt",
        seed=seed,
        n_runs=n_runs,
        n_steps=probe_steps[-1],
        stats={"block_start": m, "passed": result.passed},
        latency_ms=(time.time() - started) * 1000,
    )
    return result
