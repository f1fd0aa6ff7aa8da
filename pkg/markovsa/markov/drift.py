"""Drift inequalities (V4) and (DV3) on finite chains"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from markovsa.errors import DriftOverflow
from markovsa.markov.chains import FiniteMarkovChain

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-12

# Parts of (DV3) with no finite-state content; reported, never checked
UNVERIFIED_DV3 = ["s is a small function", "level sets {W <= r} are small or empty"]


class DriftCondition(str, Enum):
    V4 = "V4"
    DV3 = "DV3"


@dataclass
class DriftReport:
    """Per-state slack (rhs - lhs) of a drift inequality"""
    condition: DriftCondition
    residuals: np.ndarray
    satisfied: bool
    params: Dict[str, Any]
    w_below_one: List[int] = field(default_factory=list)
    unverified: List[str] = field(default_factory=list)

    @property
    def failing_states(self) -> List[int]:
        return [int(x) for x in np.flatnonzero(self.residuals < -RESIDUAL_TOL)]

    def summary(self) -> Dict[str, Any]:
        failing = self.failing_states
        return {
            "condition": self.condition.value,
            "satisfied": self.satisfied,
            "min_residual": float(self.residuals.min()),
            "n_failing": len(failing),
            "first_failing_state": failing[0] if failing else None,
            "max_failing_state": failing[-1] if failing else None,
            "w_below_one": self.w_below_one,
            "unverified": self.unverified,
            "params": self.params,
        }


def _table(values: Sequence[float], n: int, name: str) -> np.ndarray:
    table = np.asarray(values, dtype=np.float64)
    if table.shape != (n,):
        raise ValueError(f"{name} must have one value per state ({n}), got shape {table.shape}")
    return table


def check_drift(
    chain: FiniteMarkovChain,
    condition: DriftCondition,
    v_or_V: Sequence[float],
    s: Sequence[float],
    b: float,
    delta: Optional[float] = None,
    W: Optional[Sequence[float]] = None,
) -> DriftReport:
    """
    Evaluate (V4) or (DV3) at every state.

    (V4): E[v(Φ1) - v(x)] <= -δ v(x) + b s(x).
    (DV3): log E[exp V(Φ1)] <= V(x) - W(x) + b s(x), compared in log space.
    """
    condition = DriftCondition(condition)
    n = chain.n_states
    values = _table(v_or_V, n, "v/V")
    small = _table(s, n, "s")

    if condition is DriftCondition.V4:
        if delta is None:
            raise ValueError("V4 needs a rate delta")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DriftOverflow(bad)
        lhs = chain.P @ values - values
        rhs = -delta * values + b * small
        residuals = rhs - lhs
        params = {"delta": delta, "b": b, "slots": ["v", "s"]}
        w_low: List[int] = []
        unverified: List[str] = ["s is a small function"]
    else:
        if W is None:
            raise ValueError("DV3 needs W")
        w_table = _table(W, n, "W")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DriftOverflow(bad)
        with np.errstate(divide="ignore"):
            log_p = np.log(chain.P)
        lhs = logsumexp(values[None, :] + log_p, axis=1)
        if not np.all(np.isfinite(lhs)):
            bad = int(np.flatnonzero(~np.isfinite(lhs))[0])
            raise DriftOverflow(bad)
        rhs = values - w_table + b * small
        residuals = rhs - lhs
        params = {"delta": None, "b": b, "slots": ["V", "W", "s"]}
        w_low = [int(x) for x in np.flatnonzero(w_table < 1.0)]
        unverified = list(UNVERIFIED_DV3)
        if w_low:
            logger.info(f"DV3 check: W < 1 at {len(w_low)} states")

    satisfied = bool(np.all(residuals >= -RESIDUAL_TOL))
    logger.debug(f"{condition.value} check on {n} states: satisfied={satisfied}")
    return DriftReport(
        condition=condition,
        residuals=residuals,
        satisfied=satisfied,
        params=params,
        w_below_one=w_low,
        unverified=unverified,
    )


def find_v4_parameters(
    chain: FiniteMarkovChain,
    v: Sequence[float],
    s: Sequence[float],
    delta_grid: Optional[Sequence[float]] = None,
) -> Optional[DriftReport]:
    """
    Largest δ on the grid for which some finite b satisfies (V4), with the smallest such b.

    Returns None when no grid value works.
    """
    n = chain.n_states
    values = _table(v, n, "v")
    small = _table(s, n, "s")
    grid = np.linspace(1e-3, 0.999, 999) if delta_grid is None else np.asarray(delta_grid)
    drift = chain.P @ values - values
    on_s = small > 0

    for delta in sorted(grid, reverse=True):
        slack = drift + delta * values  # must be <= b s
        if np.any(slack[~on_s] > RESIDUAL_TOL):
            continue
        b = max(0.0, float((slack[on_s] / small[on_s]).max())) if on_s.any() else 0.0
        report = check_drift(chain, DriftCondition.V4, values, small, b, delta=float(delta))
        if report.satisfied:
            return report
    return None
