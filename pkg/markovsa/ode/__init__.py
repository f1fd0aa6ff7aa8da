"""Mean-field ODE solvers and ODE@∞ stability probes."""

from .solver import OdeSolver, RestartedOde, euler_curve, solve_restarted_ode
from .stability import StabilityProbe, fit_exponential_rate, probe_stability

__all__ = [
    'OdeSolver',
    'RestartedOde',
    'euler_curve',
    'solve_restarted_ode',
    'StabilityProbe',
    'fit_exponential_rate',
    'probe_stability',
]
