"""Asymptotic covariance: noise covariance, linearization and the Lyapunov equation"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, linalg

from markovsa.config import get_settings
from markovsa.errors import NotHurwitz, SingularOperator
from markovsa.markov.chains import FiniteMarkovChain
from markovsa.markov.poisson import martingale_differences, solve_poisson
from markovsa.rng import run_generator
from markovsa.sa.engine import draw_block
from markovsa.sa.problem import SAProblem
from markovsa.sa.schedule import StepSizeSchedule

logger = logging.getLogger(__name__)

# Above this dimension the Kronecker system is replaced by Bartels-Stewart
KRONECKER_MAX_DIM = 10

LYAPUNOV_TOL = 1e-10


def _states_table(f: Callable, theta: np.ndarray, n_states: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    batch = np.tile(theta.reshape(1, -1), (n_states, 1))
    return f(batch, np.arange(n_states, dtype=np.int64))


def noise_covariance_exact(
    chain: FiniteMarkovChain,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    theta_star: np.ndarray,
    noise_std: float = 0.0,
) -> np.ndarray:
    """
    Σ_ζ = Σ_x π(x) Σ_y P(x,y) ζ(x→y) ζ(x→y)ᵀ with ζ(x→y) = ĥ(y) - (Pĥ)(x), ĥ = Z f(θ*, ·).

    Independent additive noise W adds noise_std²·I.
    """
    table = _states_table(f, theta_star, chain.n_states)
    zeta = martingale_differences(solve_poisson(chain, table))
    weights = chain.pi[:, None] * chain.P
    sigma = np.einsum("xy,xyi,xyj->ij", weights, zeta, zeta)
    sigma = 0.5 * (sigma + sigma.T)
    return sigma + noise_std**2 * np.eye(sigma.shape[0])


def noise_covariance_batch_means(
    problem: SAProblem,
    theta_star: np.ndarray,
    n_steps: int = 1_000_000,
    n_batches: int = 100,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Long-run covariance of f(θ*, Φ_k) + W_k by batch means.

    Each batch is an independent chain path of n_steps // n_batches steps with
    its own stream (seed, batch); the batches advance in lockstep on blocks of
    draws. Returns (Σ̂, standard errors of its entries).
    """
    if n_batches < 2:
        raise ValueError("n_batches must be >= 2")
    batch_len = n_steps // n_batches
    if batch_len < 1:
        raise ValueError("n_steps must be at least n_batches")
    block_size = get_settings().block_size
    generators = [run_generator(seed, b) for b in range(n_batches)]
    theta = np.tile(np.asarray(theta_star, dtype=np.float64).reshape(1, -1), (n_batches, 1))
    states = np.full(n_batches, problem.initial_state, dtype=np.int64)
    sums = np.zeros_like(theta)

    for block_start in range(0, batch_len, block_size):
        length = min(block_size, batch_len - block_start)
        uniforms, normals = draw_block(generators, block_size, problem.dim)
        for j in range(length):
            states = problem.chain.step(states, uniforms[:, j])
            sums += problem.f(theta, states)
            if problem.noise_std > 0.0:
                sums += problem.noise_std * normals[:, j, :]

    means = sums / batch_len
    centered = means - means.mean(axis=0)
    products = batch_len * np.einsum("bi,bj->bij", centered, centered)
    sigma = products.sum(axis=0) / (n_batches - 1)
    stderr = products.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return sigma, stderr


def is_hurwitz(F: np.ndarray) -> bool:
    return bool(np.max(np.linalg.eigvals(F).real) < 0.0)


def solve_lyapunov(F: np.ndarray, Sigma_zeta: np.ndarray) -> np.ndarray:
    """
    Σ_θ solving FΣ + ΣFᵀ + Σ_ζ = 0.

    Vectorized Kronecker solve (I⊗F + F⊗I) vec Σ = -vec Σ_ζ for d ≤ 10,
    scipy's Bartels-Stewart solver above that.

    Raises SingularOperator when the solve fails or leaves a residual above
    LYAPUNOV_TOL (relative to max(1, ‖Σ_ζ‖_max)).
    """
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Sigma_zeta, dtype=np.float64))
    d = F.shape[0]
    if F.shape != (d, d) or Q.shape != (d, d):
        raise ValueError(f"F and Sigma_zeta must be square of equal size, got {F.shape}, {Q.shape}")
    if not is_hurwitz(F):
        raise NotHurwitz(f"F has eigenvalues {np.linalg.eigvals(F)}")

    if d <= KRONECKER_MAX_DIM:
        eye = np.eye(d)
        operator = np.kron(eye, F) + np.kron(F, eye)
        try:
            vec = linalg.solve(operator, -Q.reshape(-1, order="F"))
        except linalg.LinAlgError as e:
            raise SingularOperator(f"Lyapunov operator is singular: {e}") from e
        sigma = vec.reshape(d, d, order="F")
    else:
        sigma = linalg.solve_continuous_lyapunov(F, -Q)
    sigma = 0.5 * (sigma + sigma.T)

    residual = lyapunov_residual(F, sigma, Q)
    if residual > LYAPUNOV_TOL * max(1.0, float(np.abs(Q).max())):
        raise SingularOperator(f"Lyapunov residual {residual:.3e} above tolerance {LYAPUNOV_TOL:g}")
    return sigma


def lyapunov_residual(F: np.ndarray, Sigma_theta: np.ndarray, Sigma_zeta: np.ndarray) -> float:
    return float(np.abs(F @ Sigma_theta + Sigma_theta @ F.T + Sigma_zeta).max())


def lyapunov_integral(F: np.ndarray, Sigma: np.ndarray, t: Optional[float] = None) -> np.ndarray:
    """∫₀ᵗ e^{Fs} Σ e^{Fᵀs} ds by adaptive quadrature; t=None integrates to ∞"""
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=np.float64))
    upper = np.inf if t is None else float(t)

    def integrand(s: float) -> np.ndarray:
        flow = linalg.expm(F * s)
        return flow @ Sigma @ flow.T

    value, _ = integrate.quad_vec(integrand, 0.0, upper, epsabs=1e-12, epsrel=1e-10)
    return value


def jacobian(mean_field, theta_star: np.ndarray, analytic: Optional[Callable] = None, step: float = 1e-5) -> np.ndarray:
    """
    ∂f̄(θ*) by central differences with the given step.

    When an analytic Jacobian is supplied it is returned after checking it
    against the finite-difference estimate.
    """
    numeric = mean_field.jacobian(theta_star, step=step)
    if analytic is None:
        return numeric
    exact = np.atleast_2d(np.asarray(analytic(theta_star), dtype=np.float64)) * mean_field.gain
    gap = float(np.abs(exact - numeric).max())
    if gap > 1e-5 * max(1.0, float(np.abs(exact).max())):
        logger.warning(f"analytic Jacobian differs from finite differences by {gap:.3e}")
    return exact


def covariance_factor(Sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular D with DDᵀ = Σ; symmetric square root if Σ is singular"""
    try:
        return linalg.cholesky(Sigma, lower=True)
    except linalg.LinAlgError:
        values, vectors = np.linalg.eigh(Sigma)
        return vectors @ np.diag(np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


@dataclass
class AsymptoticCovariance:
    """
    Linearization at θ* in the unit-step form α̃_n = n^{-ρ}, field g·f.

    F = (γ/2)I + A*, Σ_θ solves FΣ_θ + Σ_θFᵀ + Σ_ζ* = 0, DDᵀ = Σ_ζ*.
    """
    A_star: np.ndarray
    gamma: float
    F: np.ndarray
    Sigma_zeta: np.ndarray
    Sigma_theta: np.ndarray
    D: np.ndarray
    theta_star: np.ndarray

    @classmethod
    def from_parts(
        cls,
        A_star: np.ndarray,
        gamma: float,
        Sigma_zeta: np.ndarray,
        theta_star: Optional[np.ndarray] = None,
    ) -> "AsymptoticCovariance":
        A_star = np.atleast_2d(np.asarray(A_star, dtype=np.float64))
        d = A_star.shape[0]
        Sigma_zeta = np.atleast_2d(np.asarray(Sigma_zeta, dtype=np.float64))
        F = 0.5 * gamma * np.eye(d) + A_star
        Sigma_theta = solve_lyapunov(F, Sigma_zeta)
        return cls(
            A_star=A_star,
            gamma=float(gamma),
            F=F,
            Sigma_zeta=Sigma_zeta,
            Sigma_theta=Sigma_theta,
            D=covariance_factor(Sigma_zeta),
            theta_star=np.zeros(d) if theta_star is None else np.asarray(theta_star, dtype=np.float64),
        )

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.F)

    def residual(self) -> float:
        return lyapunov_residual(self.F, self.Sigma_theta, self.Sigma_zeta)

    def to_dict(self) -> Dict[str, Any]:
        eig = self.eigenvalues
        return {
            "A_star": self.A_star.tolist(),
            "gamma": self.gamma,
            "F": self.F.tolist(),
            "F_eigenvalues_real": eig.real.tolist(),
            "F_eigenvalues_imag": eig.imag.tolist(),
            "Sigma_zeta": self.Sigma_zeta.tolist(),
            "Sigma_theta": self.Sigma_theta.tolist(),
        }


def build_asymptotic_covariance(
    problem: SAProblem,
    schedule: StepSizeSchedule,
    Sigma_zeta: Optional[np.ndarray] = None,
    mc_steps: int = 1_000_000,
    seed: int = 0,
) -> AsymptoticCovariance:
    """
    AsymptoticCovariance of a problem under a schedule.

    A* = g·∂f̄(θ*), Σ_ζ* = g²Σ_ζ with Σ_ζ exact on finite chains and by batch
    means otherwise, γ = 1 for ρ = 1 and 0 below.
    """
    if problem.theta_star is None:
        raise ValueError("problem has no theta_star to linearize at")
    theta_star = problem.theta_star
    mean_field = problem.mean_field(gain=schedule.gain)
    A_star = jacobian(mean_field, theta_star, analytic=problem.jacobian)

    if Sigma_zeta is None:
        if isinstance(problem.chain, FiniteMarkovChain):
            Sigma_zeta = noise_covariance_exact(
                problem.chain, problem.f, theta_star, noise_std=problem.noise_std
            )
        else:
            Sigma_zeta, stderr = noise_covariance_batch_means(
                problem, theta_star, n_steps=mc_steps, seed=seed
            )
            logger.info(f"Sigma_zeta by batch means, max standard error {float(stderr.max()):.3e}")
    scaled = schedule.gain**2 * np.atleast_2d(Sigma_zeta)
    return AsymptoticCovariance.from_parts(A_star, schedule.unit_gamma, scaled, theta_star)


def scalar_sigma_theta(slope: float, noise_std: float, gain: float, gamma: float) -> float:
    """
    Closed-form scalar Σ_θ = σ²g² / (-2g·f̄'(θ*) - γ).

    For f̄' = -4 this is σ²g²/(8g - γ).
    """
    denominator = -2.0 * gain * slope - gamma
    if denominator <= 0:
        raise NotHurwitz(f"F = {-0.5 * denominator} is not stable")
    return noise_std**2 * gain**2 / denominator
