"""Ornstein-Uhlenbeck reference process dX = FX dt + D dB, X_0 = 0"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from markovsa.asymptotics.covariance import AsymptoticCovariance, covariance_factor, solve_lyapunov
from markovsa.rng import run_generator

logger = logging.getLogger(__name__)


@dataclass
class OUProcess:
    F: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=np.float64))
        self.D = np.atleast_2d(np.asarray(self.D, dtype=np.float64))
        if self.F.shape[0] != self.D.shape[0]:
            raise ValueError(f"F is {self.F.shape}, D is {self.D.shape}")

    @classmethod
    def from_covariance(cls, asymptotic: AsymptoticCovariance) -> "OUProcess":
        return cls(F=asymptotic.F, D=asymptotic.D)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @property
    def diffusion(self) -> np.ndarray:
        return self.D @ self.D.T

    def covariance(self, t: float) -> np.ndarray:
        """
        Σ_{X_t} = ∫₀ᵗ e^{Fs} DDᵀ e^{Fᵀs} ds by Van Loan's block exponential.

        exp([[-F, DDᵀ], [0, Fᵀ]]·t) = [[·, G], [0, E]] gives Σ_{X_t} = Eᵀ G.
        """
        d = self.dim
        if t <= 0:
            return np.zeros((d, d))
        block = np.zeros((2 * d, 2 * d))
        block[:d, :d] = -self.F
        block[:d, d:] = self.diffusion
        block[d:, d:] = self.F.T
        expo = linalg.expm(block * t)
        cov = expo[d:, d:].T @ expo[:d, d:]
        return 0.5 * (cov + cov.T)

    def stationary_covariance(self) -> np.ndarray:
        return solve_lyapunov(self.F, self.diffusion)

    def transition(self, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """(e^{F dt}, factor of the one-step covariance): X' = A X + L ξ exactly"""
        return linalg.expm(self.F * dt), covariance_factor(self.covariance(dt))


@dataclass
class OUPathStats:
    """Moments of simulated X_t at the probe times; standard errors from the spread of products"""
    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    covariance_stderr: np.ndarray
    n_paths: int


def simulate_ou(
    process: OUProcess,
    T: float,
    dt: float,
    n_paths: int,
    seed: int,
    probe_times: Optional[Sequence[float]] = None,
) -> OUPathStats:
    """
    Exact-transition simulation of X on the grid 0, dt, ..., T from X_0 = 0.

    Moments are reported at the grid points nearest `probe_times`
    (default: every grid point).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    n_grid = int(round(T / dt))
    grid = dt * np.arange(n_grid + 1)
    if probe_times is None:
        probe_idx = np.arange(n_grid + 1)
    else:
        probe_idx = np.array([int(round(t / dt)) for t in probe_times])
        if probe_idx.min() < 0 or probe_idx.max() > n_grid:
            raise ValueError("probe time outside [0, T]")

    A, L = process.transition(dt)
    rng = run_generator(seed, 0)
    d = process.dim
    X = np.zeros((n_paths, d))
    wanted = {int(i): j for j, i in enumerate(probe_idx)}
    mean = np.zeros((len(probe_idx), d))
    cov = np.zeros((len(probe_idx), d, d))
    stderr = np.zeros((len(probe_idx), d, d))

    def record(slot: int) -> None:
        products = np.einsum("pi,pj->pij", X, X)
        mean[slot] = X.mean(axis=0)
        cov[slot] = products.mean(axis=0)
        stderr[slot] = products.std(axis=0, ddof=1) / np.sqrt(n_paths)

    if 0 in wanted:
        record(wanted[0])
    for k in range(1, n_grid + 1):
        X = X @ A.T + rng.standard_normal((n_paths, d)) @ L.T
        if k in wanted:
            record(wanted[k])

    logger.debug(f"simulate_ou: {n_paths} paths, {n_grid} steps of {dt}")
    return OUPathStats(
        times=grid[probe_idx],
        mean=mean,
        covariance=cov,
        covariance_stderr=stderr,
        n_paths=n_paths,
    )
