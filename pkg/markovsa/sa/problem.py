"""SA problems f(θ, x), their mean fields and the worked examples"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from markovsa.config import get_settings
from markovsa.markov.chains import Chain, FiniteMarkovChain, MM1Chain
from markovsa.rng import run_generator

logger = logging.getLogger(__name__)

# Batched field: theta (R, d), states (R,) -> (R, d)
FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class SAProblem:
    """
    θ_{n+1} = θ_n + α_{n+1}[f(θ_n, Φ_{n+1}) + W_{n+1}].

    `f` is evaluated on batches of runs. W is i.i.d. N(0, noise_std²) per
    coordinate, independent of the chain; noise_std = 0 disables it.
    """
    dim: int
    f: FieldFn
    chain: Chain
    noise_std: float = 0.0
    theta_star: Optional[np.ndarray] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"
    initial_state: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.theta_star is not None:
            self.theta_star = np.asarray(self.theta_star, dtype=np.float64).reshape(self.dim)

    def evaluate(self, theta: np.ndarray, state: int) -> np.ndarray:
        """f(θ, x) for a single parameter vector"""
        batch = np.asarray(theta, dtype=np.float64).reshape(1, self.dim)
        return self.f(batch, np.array([state], dtype=np.int64))[0]

    def mean_field(self, gain: float = 1.0) -> "MeanField":
        return MeanField(self, gain=gain)


@dataclass
class MeanField:
    """
    f̄(θ) = gain·E_π[f(θ, Φ)], exact for finite chains.

    For the M/M/1 queue the average runs over the geometric law up to the
    state where the remaining mass is negligible. `gain` moves the step-size
    gain into the field for the unit-step form.
    """
    problem: SAProblem
    gain: float = 1.0
    c_big: float = field(default_factory=lambda: get_settings().c_big)

    def __post_init__(self):
        chain = self.problem.chain
        if isinstance(chain, MM1Chain):
            cap = chain.tail_cap()
            self._states = np.arange(cap + 1, dtype=np.int64)
            self._weights = chain.geometric_pi(cap)
        else:
            self._states = np.arange(chain.n_states, dtype=np.int64)
            self._weights = np.asarray(chain.pi)

    @property
    def dim(self) -> int:
        return self.problem.dim

    def fbar(self, theta: np.ndarray) -> np.ndarray:
        """Accepts a d-vector or a (B, d) batch"""
        theta = np.asarray(theta, dtype=np.float64)
        batch = theta.reshape(-1, self.dim)
        n_states = len(self._states)
        stacked = np.repeat(batch, n_states, axis=0)
        states = np.tile(self._states, batch.shape[0])
        values = self.problem.f(stacked, states).reshape(batch.shape[0], n_states, self.dim)
        averaged = self.gain * np.einsum("s,bsd->bd", self._weights, values)
        return averaged.reshape(theta.shape)

    __call__ = fbar

    def scaled(self, c: float) -> Callable[[np.ndarray], np.ndarray]:
        """f̄_c(θ) = f̄(cθ)/c"""
        if c == 1.0:
            return self.fbar
        return lambda theta: self.fbar(c * np.asarray(theta, dtype=np.float64)) / c

    def finf(self, theta: np.ndarray) -> np.ndarray:
        """f̄_∞ approximated as f̄_{c_big}"""
        return self.scaled(self.c_big)(theta)

    def check_infinity_limit(self, n_directions: int = 64, tol: float = 1e-6, seed: int = 0) -> float:
        """
        sup over sampled unit θ of ‖f̄_c(θ) - f̄_{10c}(θ)‖ at c = c_big.

        Logs a warning when the gap exceeds `tol`.
        """
        directions = unit_directions(self.dim, n_directions, seed)
        gap = np.abs(self.scaled(self.c_big)(directions) - self.scaled(10.0 * self.c_big)(directions))
        worst = float(gap.max())
        if worst > tol:
            logger.warning(
                f"f_inf not converged at c_big={self.c_big:g}: gap {worst:.3e} > {tol:g}"
            )
        return worst

    def jacobian(self, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Central finite differences of f̄"""
        theta = np.asarray(theta, dtype=np.float64).reshape(self.dim)
        shifts = step * np.eye(self.dim)
        upper = self.fbar(theta[None, :] + shifts)
        lower = self.fbar(theta[None, :] - shifts)
        return ((upper - lower) / (2.0 * step)).T


def unit_directions(dim: int, n_random: int, seed: int = 0) -> np.ndarray:
    """±e_i followed by `n_random` seeded uniform directions on the sphere"""
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    if n_random <= 0:
        return axes
    rng = run_generator(seed, 0)
    raw = rng.standard_normal((n_random, dim))
    return np.concatenate([axes, raw / np.linalg.norm(raw, axis=1, keepdims=True)])


def lipschitz_probe(
    problem: SAProblem,
    n_samples: int = 256,
    scale: float = 10.0,
    seed: int = 0,
    max_state: int = 50,
) -> np.ndarray:
    """
    Per-state estimate of L(x) = sup ‖f(θ,x) - f(θ',x)‖ / ‖θ - θ'‖ from random pairs.

    Covers every state of a finite chain, or 0..max_state for the queue.
    """
    chain = problem.chain
    n_states = chain.n_states if isinstance(chain, FiniteMarkovChain) else max_state + 1
    rng = run_generator(seed, 0)
    theta = scale * rng.standard_normal((n_samples, problem.dim))
    other = scale * rng.standard_normal((n_samples, problem.dim))
    spread = np.linalg.norm(theta - other, axis=1)
    estimates = np.zeros(n_states)
    for x in range(n_states):
        states = np.full(n_samples, x, dtype=np.int64)
        gap = np.linalg.norm(problem.f(theta, states) - problem.f(other, states), axis=1)
        estimates[x] = float(np.max(gap / spread))
    if not np.all(np.isfinite(estimates)):
        logger.warning("Lipschitz probe found a non-finite ratio")
    return estimates


def iid_chain() -> FiniteMarkovChain:
    """One-state chain: f is driven by the additive noise only"""
    return FiniteMarkovChain([[1.0]])


def sgd_problem(noise_std: float = 10.0) -> SAProblem:
    """
    Gradient descent on ½θ² - 3[cos θ - 1] with additive Gaussian noise.

    f(θ) = -(θ + 3 sin θ); f̄'(0) = -4, and f̄(rθ)/r → -θ.
    """

    def f(theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        return -(theta + 3.0 * np.sin(theta))

    def jacobian(theta: np.ndarray) -> np.ndarray:
        return np.diag(-(1.0 + 3.0 * np.cos(np.asarray(theta, dtype=np.float64).reshape(1))))

    return SAProblem(
        dim=1,
        f=f,
        chain=iid_chain(),
        noise_std=noise_std,
        theta_star=np.zeros(1),
        jacobian=jacobian,
        name="sgd",
    )


def mm1_problem(load: float, noise_std: float = 1.0, truncation_level: int = 50) -> SAProblem:
    """Scalar recursion f(θ, Q) = (Q - η - 1)θ driven by the M/M/1 queue; f̄(θ) = -θ"""
    chain = MM1Chain.from_load(load, truncation_level=truncation_level)
    shift = chain.eta + 1.0

    def f(theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        return (states[:, None] - shift) * theta

    return SAProblem(
        dim=1,
        f=f,
        chain=chain,
        noise_std=noise_std,
        theta_star=np.zeros(1),
        jacobian=lambda theta: -np.eye(1),
        name="mm1",
    )


def linear_problem(
    chain: FiniteMarkovChain,
    A: np.ndarray,
    b: np.ndarray,
    noise_std: float = 0.0,
) -> SAProblem:
    """
    f(θ, x) = A(x)θ + b(x) with per-state tables A (n, d, d) and b (n, d).

    θ* solves Āθ + b̄ = 0 with Ā = E_π A, b̄ = E_π b.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 3 or A.shape[0] != chain.n_states or A.shape[1] != A.shape[2]:
        raise ValueError(f"A must have shape (n_states, d, d), got {A.shape}")
    dim = A.shape[1]
    if b.shape != (chain.n_states, dim):
        raise ValueError(f"b must have shape ({chain.n_states}, {dim}), got {b.shape}")

    A_bar = np.tensordot(chain.pi, A, axes=(0, 0))
    b_bar = chain.pi @ b
    try:
        theta_star: Optional[np.ndarray] = np.linalg.solve(A_bar, -b_bar)
    except np.linalg.LinAlgError:
        logger.info("mean field matrix is singular; theta_star left unset")
        theta_star = None

    def f(theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        return np.einsum("rij,rj->ri", A[states], theta) + b[states]

    return SAProblem(
        dim=dim,
        f=f,
        chain=chain,
        noise_std=noise_std,
        theta_star=theta_star,
        jacobian=lambda theta: A_bar,
        name="linear",
    )


def scalar_linear_problem(slope: float = -1.0, noise_std: float = 1.0) -> SAProblem:
    """f(θ) = slope·θ with i.i.d. additive noise"""
    return linear_problem(
        iid_chain(),
        np.array([[[slope]]]),
        np.zeros((1, 1)),
        noise_std=noise_std,
    )
