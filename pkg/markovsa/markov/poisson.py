"""Fundamental kernel and Poisson's equation on finite chains"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from markovsa.markov.chains import FiniteMarkovChain

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoissonSolution:
    """
    Z together with a solved Poisson equation.

    `g` is the input table (n or n×d), `g_hat = Z g`, `pi_g = π(g)`. A
    scaffold from `fundamental_kernel` carries Z only.
    """
    chain: FiniteMarkovChain
    Z: np.ndarray
    g: Optional[np.ndarray] = None
    g_hat: Optional[np.ndarray] = None
    pi_g: Optional[np.ndarray] = None

    def residual(self) -> float:
        """‖Pĝ - ĝ + g - π(g)1‖_∞"""
        if self.g_hat is None:
            raise ValueError("solution carries Z only")
        gap = self.chain.P @ self.g_hat - self.g_hat + self.g - self.pi_g
        return float(np.abs(gap).max())

    def kernel_residual(self) -> float:
        """‖Z(I - P + 1⊗π) - I‖_∞ entrywise"""
        n = self.chain.n_states
        operator = np.eye(n) - self.chain.P + np.outer(np.ones(n), self.chain.pi)
        return float(np.abs(self.Z @ operator - np.eye(n)).max())


def fundamental_kernel(chain: FiniteMarkovChain) -> PoissonSolution:
    """Z := [I - P + 1⊗π]^{-1}; raises SingularOperator on non-ergodic input"""
    return PoissonSolution(chain=chain, Z=chain.fundamental_matrix)


def solve_poisson(chain: FiniteMarkovChain, g: np.ndarray) -> PoissonSolution:
    """ĝ = Zg, solving Pĝ = ĝ - g + π(g)1 for a per-state vector or n×d table"""
    table = np.asarray(g, dtype=np.float64)
    if table.shape[0] != chain.n_states:
        raise ValueError(f"g has {table.shape[0]} rows, chain has {chain.n_states} states")
    if not np.all(np.isfinite(table)):
        raise ValueError("g must be finite on every state")
    Z = chain.fundamental_matrix
    return PoissonSolution(
        chain=chain,
        Z=Z,
        g=table,
        g_hat=Z @ table,
        pi_g=np.asarray(chain.expectation(table)),
    )


def martingale_differences(solution: PoissonSolution) -> np.ndarray:
    """
    ζ(x→y) = ĝ(y) - (Pĝ)(x) for every transition.

    Shape (n, n) for a vector g, (n, n, d) for a table; Σ_y P(x,y) ζ(x→y) = 0.
    """
    if solution.g_hat is None:
        raise ValueError("solution carries Z only")
    g_hat = solution.g_hat
    predicted = solution.chain.P @ g_hat
    return g_hat[None, ...] - predicted[:, None, ...]


def martingale_difference_samples(solution: PoissonSolution, path: np.ndarray) -> np.ndarray:
    """ζ_{k+1} = ĝ(Φ_{k+1}) - (Pĝ)(Φ_k) along a state path"""
    path = np.asarray(path, dtype=np.int64)
    table = martingale_differences(solution)
    return table[path[:-1], path[1:]]


def conditional_drift(solution: PoissonSolution) -> np.ndarray:
    """Σ_y P(x,y) ζ(x→y) for every x; identically zero up to rounding"""
    table = martingale_differences(solution)
    return np.einsum("xy,xy...->x...", solution.chain.P, table)
