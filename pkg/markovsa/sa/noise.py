"""
Decomposition of Markovian noise along a recorded trajectory.

With ĥ(θ, ·) = Z f(θ, ·) the noise Δ_{n+1} = f(θ_n, Φ_{n+1}) - f̄(θ_n) splits as

    Δ_{n+1} = ζ_{n+2} - T_{n+2} + T_{n+1} + E_{n+2}

    ζ_{n+2} = ĥ(θ_n, Φ_{n+2}) - (Pĥ)(θ_n, Φ_{n+1})      martingale difference
    T_{n+1} = ĥ(θ_n, Φ_{n+1})                             telescoping term
    E_{n+2} = ĥ(θ_{n+1}, Φ_{n+2}) - ĥ(θ_n, Φ_{n+2})      parameter perturbation

The additive noise W is already a martingale difference and is not part of Δ.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from markovsa.errors import UnsupportedChain
from markovsa.markov.chains import FiniteMarkovChain
from markovsa.sa.engine import Trajectory
from markovsa.sa.problem import SAProblem

logger = logging.getLogger(__name__)

# θ (d,) -> ĥ(θ, ·) as an (n_states, d) table
PoissonSolver = Callable[[np.ndarray], np.ndarray]


@dataclass
class NoiseDecomposition:
    """
    Arrays indexed by n: `delta[n]` = Δ_{n+1}, `tele[n]` = T_{n+1} (n = 0..N-1),
    `zeta[n]` = ζ_{n+2}, `eps_hf[n]` = E_{n+2} (n = 0..N-2).
    """
    delta: np.ndarray
    zeta: np.ndarray
    tele: np.ndarray
    eps_hf: np.ndarray
    alphas: np.ndarray

    def reconstruction_error(self) -> np.ndarray:
        """Per-step ‖Δ_{n+1} - (ζ_{n+2} - T_{n+2} + T_{n+1} + E_{n+2})‖_∞"""
        rebuilt = self.zeta - self.tele[1:] + self.tele[:-1] + self.eps_hf
        return np.abs(self.delta[:-1] - rebuilt).max(axis=1)

    def reconstruction_residual(self) -> float:
        errors = self.reconstruction_error()
        return float(errors.max()) if len(errors) else 0.0

    def martingale_sums(self) -> np.ndarray:
        """M_{τ_K} = Σ_{k=2..K} α_{k-1} ζ_k for K = 2..N"""
        return np.cumsum(self.alphas[1 : len(self.zeta) + 1, None] * self.zeta, axis=0)

    def sum_by_parts(self, n: int, K: int) -> Dict[str, np.ndarray]:
        """
        Σ_{i=n}^{K-1} α_{i+1}Δ_{i+1} directly and in summation-by-parts form.

        The telescoping sum collapses to α_{n+1}T_{n+1} - α_K T_{K+1} plus the
        step-size variation Σ_{j=n+2}^{K} (α_j - α_{j-1})T_j. Needs 0 ≤ n < K ≤ N-1.
        """
        last = len(self.zeta)
        if not 0 <= n < K <= last:
            raise ValueError(f"window [{n}, {K}) outside 0..{last}")
        a = self.alphas  # a[j] = α_j
        idx = np.arange(n, K)
        direct = (a[idx + 1, None] * self.delta[idx]).sum(axis=0)

        martingale = (a[idx + 1, None] * self.zeta[idx]).sum(axis=0)
        perturbation = (a[idx + 1, None] * self.eps_hf[idx]).sum(axis=0)
        j = np.arange(n + 2, K + 1)
        variation = ((a[j] - a[j - 1])[:, None] * self.tele[j - 1]).sum(axis=0)
        telescoped = a[n + 1] * self.tele[n] - a[K] * self.tele[K] + variation
        by_parts = martingale + perturbation + telescoped
        return {"direct": direct, "by_parts": by_parts, "gap": np.abs(direct - by_parts)}

    def sum_by_parts_gap(self, n: int, K: int) -> float:
        return float(self.sum_by_parts(n, K)["gap"].max())


def state_tables(problem: SAProblem, thetas: np.ndarray) -> np.ndarray:
    """f(θ_n, x) for every θ_n and state x, shape (N, n_states, d)"""
    n_states = problem.chain.n_states
    thetas = np.asarray(thetas, dtype=np.float64)
    stacked = np.repeat(thetas, n_states, axis=0)
    states = np.tile(np.arange(n_states, dtype=np.int64), len(thetas))
    return problem.f(stacked, states).reshape(len(thetas), n_states, problem.dim)


def decompose_noise(
    trajectory: Trajectory,
    poisson_solver: Optional[PoissonSolver] = None,
) -> NoiseDecomposition:
    """
    Split the Markovian noise of a finite-chain trajectory.

    ĥ(θ_n, ·) comes from `poisson_solver` when given, otherwise from the
    chain's fundamental kernel applied to f(θ_n, ·) coordinatewise.
    """
    chain = trajectory.problem.chain
    if not isinstance(chain, FiniteMarkovChain):
        raise UnsupportedChain(f"noise decomposition needs a finite chain, got {chain!r}")
    if trajectory.n_steps < 2:
        raise ValueError("noise decomposition needs at least two steps")

    N = trajectory.n_steps
    thetas = trajectory.theta[:N]
    path = trajectory.states
    tables = state_tables(trajectory.problem, thetas)

    if poisson_solver is None:
        h_hat = np.einsum("xy,nyd->nxd", chain.fundamental_matrix, tables)
    else:
        h_hat = np.stack([np.asarray(poisson_solver(theta)) for theta in thetas])
    predicted = np.einsum("xy,nyd->nxd", chain.P, h_hat)

    steps = np.arange(N)
    fbar = np.einsum("x,nxd->nd", chain.pi, tables)
    delta = tables[steps, path[1 : N + 1]] - fbar
    tele = h_hat[steps, path[1 : N + 1]]

    inner = np.arange(N - 1)
    zeta = h_hat[inner, path[2 : N + 1]] - predicted[inner, path[1:N]]
    eps_hf = h_hat[inner + 1, path[2 : N + 1]] - h_hat[inner, path[2 : N + 1]]

    alphas = np.concatenate(([np.nan], np.asarray(trajectory.schedule.alpha(np.arange(1, N + 1)))))
    decomposition = NoiseDecomposition(
        delta=delta, zeta=zeta, tele=tele, eps_hf=eps_hf, alphas=alphas
    )
    logger.debug(
        f"decompose_noise: {N} steps, reconstruction residual "
        f"{decomposition.reconstruction_residual():.3e}"
    )
    return decomposition
