"""Finite Markov chains and the uniformized M/M/1 queue"""

import logging
import math
from functools import cached_property
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from markovsa.errors import NotIrreducible, SingularChain, SingularOperator

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
BALANCE_TOL = 1e-10

# Stationary tail mass ignored when an M/M/1 average is taken over a finite range
TAIL_MASS = 1e-17


class FiniteMarkovChain:
    """
    Irreducible, aperiodic chain on states 0..n-1.

    The transition matrix is copied and frozen; the stationary law and the
    fundamental kernel are computed on first use.
    """

    def __init__(self, P: Any):
        matrix = np.array(P, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
            raise ValueError(f"P must be a non-empty square matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("P has non-finite entries")
        if matrix.min() < 0.0 or matrix.max() > 1.0:
            raise ValueError("P entries must lie in [0, 1]")
        row_gap = np.abs(matrix.sum(axis=1) - 1.0).max()
        if row_gap > ROW_SUM_TOL:
            raise ValueError(f"rows of P must sum to 1 (max gap {row_gap:.3e})")

        matrix.setflags(write=False)
        self.P = matrix
        self.n_states = matrix.shape[0]
        self._check_primitive()
        self._cumulative = np.cumsum(matrix, axis=1)
        self._cumulative.setflags(write=False)

    def _check_primitive(self) -> None:
        # Wielandt: a primitive n×n matrix has P^((n-1)^2+1) > 0
        exponent = (self.n_states - 1) ** 2 + 1
        base = (self.P > 0).astype(np.float64)
        power = np.eye(self.n_states)
        # Boolean matrix power by squaring; entries are clipped to {0, 1}
        while exponent:
            if exponent & 1:
                power = np.minimum(power @ base, 1.0)
            base = np.minimum(base @ base, 1.0)
            exponent >>= 1
        if not np.all(power > 0):
            raise NotIrreducible(
                f"chain with {self.n_states} states is not irreducible and aperiodic"
            )

    def __repr__(self) -> str:
        return f"FiniteMarkovChain(n_states={self.n_states})"

    @property
    def is_finite(self) -> bool:
        return True

    @cached_property
    def pi(self) -> np.ndarray:
        """Stationary law by direct solve of the balance equations"""
        return stationary_distribution(self)

    @cached_property
    def fundamental_matrix(self) -> np.ndarray:
        """Z = [I - P + 1⊗π]^{-1}"""
        n = self.n_states
        operator = np.eye(n) - self.P + np.outer(np.ones(n), self.pi)
        try:
            Z = linalg.inv(operator)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularOperator(f"I - P + 1⊗π is singular: {e}") from e
        if not np.all(np.isfinite(Z)):
            raise SingularOperator("I - P + 1⊗π is numerically singular")
        Z.setflags(write=False)
        return Z

    def neumann_kernel(self, tol: float = 1e-12, max_terms: int = 100_000) -> np.ndarray:
        """I + Σ_{k≥1}(P^k - 1⊗π), truncated once the centered power is below tol"""
        n = self.n_states
        rank_one = np.outer(np.ones(n), self.pi)
        total = np.eye(n)
        power = np.eye(n)
        for _ in range(max_terms):
            power = power @ self.P
            centered = power - rank_one
            total += centered
            if np.abs(centered).sum(axis=1).max() < tol:
                return total
        logger.warning(f"Neumann series did not reach tol={tol} in {max_terms} terms")
        return total

    def step(self, states: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Next states, one uniform draw per current state"""
        states = np.asarray(states, dtype=np.int64)
        rows = self._cumulative[states]
        nxt = (np.asarray(uniforms)[..., None] >= rows).sum(axis=-1)
        return np.minimum(nxt, self.n_states - 1)

    def expectation(self, values: np.ndarray) -> np.ndarray:
        """π-average of a per-state table (first axis indexes states)"""
        return np.tensordot(self.pi, np.asarray(values, dtype=np.float64), axes=(0, 0))


class MM1Chain:
    """
    Uniformized M/M/1 queue: up with probability α, down (reflected at 0) with μ = 1 - α.

    Simulation is on the unbounded state space; `truncation_level` is used
    only when a finite matrix view is requested.
    """

    def __init__(self, arrival_prob: float, truncation_level: int = 50):
        if not 0.0 < arrival_prob < 1.0:
            raise ValueError(f"arrival_prob must lie in (0, 1), got {arrival_prob}")
        if truncation_level < 0:
            raise ValueError("truncation_level must be nonnegative")
        self.arrival_prob = float(arrival_prob)
        self.service_prob = 1.0 - self.arrival_prob
        self.truncation_level = int(truncation_level)

    @classmethod
    def from_load(cls, load: float, truncation_level: int = 50) -> "MM1Chain":
        """Chain with ρ = α/μ = load"""
        if not load > 0.0:
            raise ValueError(f"load must be positive, got {load}")
        return cls(load / (1.0 + load), truncation_level=truncation_level)

    def __repr__(self) -> str:
        return f"MM1Chain(arrival_prob={self.arrival_prob}, truncation_level={self.truncation_level})"

    @property
    def is_finite(self) -> bool:
        return False

    @property
    def load(self) -> float:
        return self.arrival_prob / self.service_prob

    @property
    def ergodic(self) -> bool:
        return self.load < 1.0

    @property
    def eta(self) -> float:
        """Mean queue length ρ/(1-ρ) under π"""
        if not self.ergodic:
            raise ValueError(f"load {self.load} is not ergodic")
        return self.load / (1.0 - self.load)

    def step(self, states: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        return np.where(np.asarray(uniforms) < self.arrival_prob, states + 1, np.maximum(states - 1, 0))

    def geometric_pi(self, cap: Optional[int] = None) -> np.ndarray:
        """π(k) ∝ ρ^k on 0..cap, renormalized"""
        cap = self.truncation_level if cap is None else cap
        weights = self.load ** np.arange(cap + 1, dtype=np.float64)
        return weights / weights.sum()

    def truncated(self, cap: Optional[int] = None) -> FiniteMarkovChain:
        """Finite view on 0..cap, reflecting at the cap"""
        cap = self.truncation_level if cap is None else cap
        size = cap + 1
        P = np.zeros((size, size))
        if size == 1:
            P[0, 0] = 1.0
            return FiniteMarkovChain(P)
        for k in range(size):
            P[k, min(k + 1, cap)] += self.arrival_prob
            P[k, max(k - 1, 0)] += self.service_prob
        return FiniteMarkovChain(P)

    def tail_cap(self, mass: float = TAIL_MASS) -> int:
        """Smallest K with stationary tail mass beyond K below `mass`"""
        if not self.ergodic:
            raise ValueError("tail_cap needs an ergodic queue")
        return max(1, int(math.ceil(math.log(mass) / math.log(self.load))))

    def expectation(self, values_fn) -> np.ndarray:
        """π-average of x ↦ values_fn(x) over the geometric law, tail below TAIL_MASS dropped"""
        cap = self.tail_cap()
        states = np.arange(cap + 1)
        return np.tensordot(self.geometric_pi(cap), values_fn(states), axes=(0, 0))

    def cap_hits(self, states: np.ndarray) -> int:
        """Number of visits at or above the truncation level"""
        return int(np.count_nonzero(np.asarray(states) >= self.truncation_level))


Chain = Union[FiniteMarkovChain, MM1Chain]


def stationary_distribution(chain: FiniteMarkovChain) -> np.ndarray:
    """
    Solve π(I - P) = 0, Σπ = 1 by replacing one balance equation with normalization.

    Raises SingularChain if I - P has more than a one-dimensional null space.
    """
    n = chain.n_states
    balance = np.eye(n) - chain.P
    if n > 1 and np.linalg.matrix_rank(balance) < n - 1:
        raise SingularChain(f"balance equations of {n}-state chain are rank deficient")

    system = balance.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = linalg.solve(system, rhs)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularChain(f"balance equations are singular: {e}") from e

    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    gap = np.abs(pi @ chain.P - pi).max()
    if gap > BALANCE_TOL:
        raise SingularChain(f"stationary solve left balance residual {gap:.3e}")
    pi.setflags(write=False)
    return pi


def mm1_step(chain: MM1Chain, state: int, rng: np.random.Generator) -> int:
    """One queue transition using exactly one uniform draw"""
    return int(chain.step(np.array([state]), np.array([rng.random()]))[0])


def random_stochastic_matrix(n_states: int, rng: np.random.Generator) -> np.ndarray:
    """Dense random transition matrix (strictly positive, hence primitive)"""
    raw = rng.random((n_states, n_states)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


class FiniteChainDocument(BaseModel):
    """JSON form {"n_states": int, "P": [[...]]}"""
    model_config = ConfigDict(extra="forbid")

    n_states: int = Field(gt=0)
    P: List[List[float]]


class MM1Parameters(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arrival_prob: float = Field(gt=0.0, lt=1.0)
    cap: int = Field(default=50, ge=0)


class MM1Document(BaseModel):
    """JSON form {"mm1": {"arrival_prob": float, "cap": int}}"""
    model_config = ConfigDict(extra="forbid")

    mm1: MM1Parameters


def chain_from_json(document: Dict[str, Any]) -> Chain:
    """Build a chain from its JSON document"""
    if "mm1" in document:
        parsed = MM1Document.model_validate(document)
        return MM1Chain(parsed.mm1.arrival_prob, truncation_level=parsed.mm1.cap)
    finite = FiniteChainDocument.model_validate(document)
    if len(finite.P) != finite.n_states:
        raise ValueError(f"P has {len(finite.P)} rows, expected {finite.n_states}")
    return FiniteMarkovChain(finite.P)


def chain_to_json(chain: Chain) -> Dict[str, Any]:
    """JSON document for a chain"""
    if isinstance(chain, MM1Chain):
        return MM1Document(
            mm1=MM1Parameters(arrival_prob=chain.arrival_prob, cap=chain.truncation_level)
        ).model_dump()
    return FiniteChainDocument(n_states=chain.n_states, P=chain.P.tolist()).model_dump()
