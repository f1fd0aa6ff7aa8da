"""Asymptotic covariance, OU reference process and CLT/FCLT experiments."""

from .covariance import (
    AsymptoticCovariance,
    build_asymptotic_covariance,
    covariance_factor,
    is_hurwitz,
    jacobian,
    lyapunov_integral,
    lyapunov_residual,
    noise_covariance_batch_means,
    noise_covariance_exact,
    scalar_sigma_theta,
    solve_lyapunov,
)
from .experiments import (
    CltResult,
    FcltResult,
    NormalizedErrorSeries,
    block_start_index,
    clt_experiment,
    fclt_experiment,
    histogram,
    second_moment,
    trim_mask,
)
from .ou import OUPathStats, OUProcess, simulate_ou

__all__ = [
    'AsymptoticCovariance',
    'build_asymptotic_covariance',
    'covariance_factor',
    'is_hurwitz',
    'jacobian',
    'lyapunov_integral',
    'lyapunov_residual',
    'noise_covariance_batch_means',
    'noise_covariance_exact',
    'scalar_sigma_theta',
    'solve_lyapunov',
    'CltResult',
    'FcltResult',
    'NormalizedErrorSeries',
    'block_start_index',
    'clt_experiment',
    'fclt_experiment',
    'histogram',
    'second_moment',
    'trim_mask',
    'OUPathStats',
    'OUProcess',
    'simulate_ou',
]
