"""Summary documents and output writers for the CLI"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel


def finite_or_none(value: Any) -> Optional[float]:
    """float(value), or None for NaN/inf so the JSON stays standard"""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def matrix_or_none(matrix: Optional[np.ndarray]) -> Optional[List[List[Optional[float]]]]:
    if matrix is None:
        return None
    return [[finite_or_none(v) for v in row] for row in np.atleast_2d(matrix)]


class CltSummary(BaseModel):
    rho: float
    gain: float
    noise_std: float
    n_runs: int
    n_steps: int
    seed: int
    sigma_theta_theory: Optional[List[List[Optional[float]]]] = None
    sigma_theta_empirical: List[List[Optional[float]]]
    sigma_theta_raw: List[List[Optional[float]]]
    trim_sigmas: float
    n_outliers: int
    n_nonfinite: int
    skewness: List[Optional[float]]
    kurtosis: List[Optional[float]]
    histogram_file: str


class FcltProbe(BaseModel):
    t: float
    step: int
    empirical: Optional[float] = None
    ou: float
    relative_error: Optional[float] = None


class FcltSummary(BaseModel):
    rho: float
    gain: float
    n_runs: int
    seed: int
    block_start: int
    T: float
    tolerance: float
    passed: bool
    n_nonfinite: int
    probes: List[FcltProbe]


class ProductMomentRow(BaseModel):
    n: int
    log_mean: Optional[float] = None
    log_stderr: Optional[float] = None
    negative_fraction: float


class CounterexampleSummary(BaseModel):
    load: float
    alpha: float
    mu: float
    eta: float
    n_runs: int
    n_steps: int
    seed: int
    theta0: float
    sigma_theta_theory: float
    trimmed_variance: Optional[float] = None
    raw_variance: Optional[float] = None
    n_outliers: int
    blowup_fraction: float
    exceed_threshold: float
    exceed_fraction: float
    ldp_epsilon: float
    ldp_exponent: Optional[float] = None
    quadratic_bound: Optional[float] = None
    queue_bound_threshold: Optional[float] = None
    product_moments: List[ProductMomentRow] = []


class DiagnoseReport(BaseModel):
    problem: str
    rho: float
    gain: float
    drift: Optional[Dict[str, Any]] = None
    unstable_at_infinity: bool = False
    T_r: Optional[float] = None
    rho_r: Optional[float] = None
    c0: Optional[float] = None
    stability_falsified: Optional[bool] = None
    F: Optional[List[List[Optional[float]]]] = None
    F_eigenvalues_real: Optional[List[float]] = None
    Sigma_zeta: Optional[List[List[Optional[float]]]] = None
    Sigma_theta: Optional[List[List[Optional[float]]]] = None
    errors: List[str] = []


class PoissonSummary(BaseModel):
    n_states: int
    seed: int
    pi: List[float]
    pi_g: float
    residual: float
    kernel_residual: float
    table_file: str


class ScheduleSummary(BaseModel):
    rho: float
    gain: float
    gamma_limit: float
    unit_gamma: float
    n_min: int
    tau: Dict[str, float]
    table_file: str


def write_json(path: Union[str, Path], summary: BaseModel) -> Path:
    """Sorted keys, two-space indent, trailing newline"""
    path = Path(path)
    path.write_text(json.dumps(summary.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path: Union[str, Path], columns: Sequence[str], table: np.ndarray) -> Path:
    """Header row then rows at full double precision"""
    path = Path(path)
    data = np.asarray(table, dtype=np.float64).reshape(-1, len(columns))
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(columns), comments="")
    return path


def schemas() -> Dict[str, Dict[str, Any]]:
    """JSON schemas of every summary document"""
    models = [CltSummary, FcltSummary, CounterexampleSummary, DiagnoseReport, PoissonSummary, ScheduleSummary]
    return {model.__name__: model.model_json_schema() for model in models}
