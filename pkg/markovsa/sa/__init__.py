"""SA recursion, step-size schedules, mean fields and noise decomposition."""

from .engine import (
    BatchResult,
    Trajectory,
    draw_block,
    initial_thetas,
    interpolate,
    run_sa,
    shard_bounds,
    simulate_batch,
)
from .noise import NoiseDecomposition, decompose_noise, state_tables
from .problem import (
    MeanField,
    SAProblem,
    iid_chain,
    linear_problem,
    lipschitz_probe,
    mm1_problem,
    scalar_linear_problem,
    sgd_problem,
    unit_directions,
)
from .schedule import StepSizeSchedule, make_schedule

__all__ = [
    'BatchResult',
    'Trajectory',
    'draw_block',
    'initial_thetas',
    'interpolate',
    'run_sa',
    'shard_bounds',
    'simulate_batch',
    'NoiseDecomposition',
    'decompose_noise',
    'state_tables',
    'MeanField',
    'SAProblem',
    'iid_chain',
    'linear_problem',
    'lipschitz_probe',
    'mm1_problem',
    'scalar_linear_problem',
    'sgd_problem',
    'unit_directions',
    'StepSizeSchedule',
    'make_schedule',
]
