"""Exact finite-state Markov-chain machinery."""

from .chains import (
    Chain,
    FiniteMarkovChain,
    MM1Chain,
    chain_from_json,
    chain_to_json,
    mm1_step,
    random_stochastic_matrix,
    stationary_distribution,
)
from .drift import DriftCondition, DriftReport, check_drift, find_v4_parameters
from .poisson import (
    PoissonSolution,
    conditional_drift,
    fundamental_kernel,
    martingale_difference_samples,
    martingale_differences,
    solve_poisson,
)

__all__ = [
    'Chain',
    'FiniteMarkovChain',
    'MM1Chain',
    'chain_from_json',
    'chain_to_json',
    'mm1_step',
    'random_stochastic_matrix',
    'stationary_distribution',
    'DriftCondition',
    'DriftReport',
    'check_drift',
    'find_v4_parameters',
    'PoissonSolution',
    'conditional_drift',
    'fundamental_kernel',
    'martingale_difference_samples',
    'martingale_differences',
    'solve_poisson',
]
