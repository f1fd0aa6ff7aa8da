"""ODE@∞ relaxation time and contraction probes"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

from markovsa.errors import UnstableAtInfinity
from markovsa.ode.solver import OdeSolver
from markovsa.sa.problem import MeanField, unit_directions

logger = logging.getLogger(__name__)

# Resolution of the time grid on which T_r is reported
TIME_GRID = 1e-2

DEFAULT_C_GRID = (1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6)


@dataclass
class StabilityProbe:
    """
    Result of probing the scaled flows φ_c and φ_∞ from sampled unit vectors.

    `falsified` means a probe point violated the bound; a clean probe only
    says the bound was not falsified on the samples, it does not certify it.
    """
    T_r: Optional[float]
    rho_r: Optional[float]
    c0: Optional[float]
    sphere_samples: int
    falsified: bool
    horizon: float
    rho_by_c: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {"T_r": self.T_r, "rho_r": self.rho_r, "c0": self.c0, "falsified": self.falsified}

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _sup_norms(paths: np.ndarray) -> np.ndarray:
    """sup over probe points of ‖φ‖ at every time (paths: time × points × d)"""
    return np.linalg.norm(paths, axis=2).max(axis=1)


def probe_stability(
    mean_field: MeanField,
    horizon: float = 10.0,
    sphere_samples: int = 64,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    seed: int = 0,
    step: Optional[float] = None,
) -> StabilityProbe:
    """
    T_r: first grid time after which sup ‖φ_∞(t, θ)‖ ≤ 1/2 up to the horizon.

    rho_r: max of ‖φ_c(t, θ)‖ over t ∈ [T_r, T_r + 1] and the probed c ≥ c0,
    floored at 1/2; c0 is the smallest c in the grid from which every larger
    probed c contracts (ρ < 1). Probe points are ±e_i plus `sphere_samples`
    seeded random unit vectors.
    """
    directions = unit_directions(mean_field.dim, sphere_samples, seed)
    n_grid = int(round(horizon / TIME_GRID))
    times = TIME_GRID * np.arange(n_grid + 1)

    infinity = OdeSolver(mean_field.finf, step=step).integrate(directions, times)
    sup_norm = _sup_norms(infinity)
    if not np.all(np.isfinite(sup_norm)) or sup_norm[-1] > 1.0:
        raise UnstableAtInfinity(
            f"ODE@inf flow leaves the unit ball: sup norm {sup_norm[-1]:.3e} at t={horizon}"
        )

    # Running sup from the right: sup_{s ≥ t} ‖φ_∞(s)‖
    tail_sup = np.maximum.accumulate(sup_norm[::-1])[::-1]
    inside = np.flatnonzero(tail_sup <= 0.5)
    if len(inside) == 0:
        logger.info(f"no relaxation time found up to horizon {horizon}")
        return StabilityProbe(
            T_r=None, rho_r=None, c0=None, sphere_samples=len(directions),
            falsified=True, horizon=horizon,
        )
    T_r = float(np.round(times[inside[0]], 10))

    window = np.concatenate(([0.0], T_r + TIME_GRID * np.arange(int(round(1.0 / TIME_GRID)) + 1)))

    def window_sup(vector_field) -> float:
        norms = _sup_norms(OdeSolver(vector_field, step=step).integrate(directions, window)[1:])
        return float(norms.max()) if np.all(np.isfinite(norms)) else float("inf")

    grid = sorted(float(c) for c in c_grid)
    rho_by_c: Dict[str, float] = {f"{c:g}": window_sup(mean_field.scaled(c)) for c in grid}
    rho_by_c["inf"] = window_sup(mean_field.finf)

    contracting = [rho_by_c[f"{c:g}"] < 1.0 for c in grid]
    c0: Optional[float] = None
    for i, c in enumerate(grid):
        if all(contracting[i:]):
            c0 = c
            break
    if c0 is None or rho_by_c["inf"] >= 1.0:
        logger.info("contraction over [T_r, T_r + 1] fails for the largest probed c")
        return StabilityProbe(
            T_r=T_r, rho_r=None, c0=None, sphere_samples=len(directions),
            falsified=True, horizon=horizon, rho_by_c=rho_by_c,
        )

    used = [rho_by_c[f"{c:g}"] for c in grid if c >= c0] + [rho_by_c["inf"]]
    rho_r = max(0.5, max(used))
    logger.info(f"stability probe: T_r={T_r:.2f} rho_r={rho_r:.4f} c0={c0:g}")
    return StabilityProbe(
        T_r=T_r, rho_r=rho_r, c0=c0, sphere_samples=len(directions),
        falsified=False, horizon=horizon, rho_by_c=rho_by_c,
    )


def fit_exponential_rate(
    mean_field,
    theta0: Sequence[float],
    theta_star: Sequence[float],
    t_end: float,
    n_points: int = 200,
    step: Optional[float] = None,
) -> float:
    """Least-squares decay rate of log‖φ(t; θ0) - θ*‖ over [0, t_end]"""
    vector_field = getattr(mean_field, "fbar", mean_field)
    times = np.linspace(0.0, t_end, n_points)
    path = OdeSolver(vector_field, step=step).integrate(np.asarray(theta0, dtype=np.float64), times)
    distance = np.linalg.norm(path - np.asarray(theta_star, dtype=np.float64), axis=-1)
    keep = distance > 0
    slope, _ = np.polyfit(times[keep], np.log(distance[keep]), 1)
    return float(-slope)
