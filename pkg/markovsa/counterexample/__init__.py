"""M/M/1-driven SA with unbounded second moments, and its large-deviation bounds."""

from .ldp import (
    ExcursionEstimate,
    LdpExponent,
    RateFunction,
    excursion_probability,
    excursion_probability_exact,
    half_harmonic_gap,
    half_harmonic_sum,
    in_constraint_region,
    ldp_exponent,
    pinched_exponent,
    product_lower_bound,
    region_bounds,
    region_floor_path,
    sigma_inequalities,
    wilson_interval,
)
from .mm1_sa import (
    CounterexampleConfig,
    CounterexampleResult,
    ProductMomentEstimate,
    convergence_profile,
    log_products,
    product_moment,
    product_moment_from_paths,
    queue_bound_threshold,
    represent_theta,
    run_counterexample,
)

__all__ = [
    'ExcursionEstimate',
    'LdpExponent',
    'RateFunction',
    'excursion_probability',
    'excursion_probability_exact',
    'half_harmonic_gap',
    'half_harmonic_sum',
    'in_constraint_region',
    'ldp_exponent',
    'pinched_exponent',
    'product_lower_bound',
    'region_bounds',
    'region_floor_path',
    'sigma_inequalities',
    'wilson_interval',
    'CounterexampleConfig',
    'CounterexampleResult',
    'ProductMomentEstimate',
    'convergence_profile',
    'log_products',
    'product_moment',
    'product_moment_from_paths',
    'queue_bound_threshold',
    'represent_theta',
    'run_counterexample',
]
