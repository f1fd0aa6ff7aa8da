"""Structured run logging for Monte Carlo batches"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from markovsa.config import get_settings

logger = logging.getLogger(__name__)


@dataclass
class RunLogEntry:
    """Log entry for one experiment batch"""
    timestamp: str
    experiment: str
    seed: int
    n_runs: int
    n_steps: int
    stats: Dict[str, Any] = field(default_factory=dict)
    latency_ms: Optional[float] = None


class RunLogger:
    """
    Logger for experiment batches.

    Entries go to the `markovsa.runlog` logger only; result files never carry
    timestamps, so reruns stay byte-identical.
    """

    def __init__(self, enabled: Optional[bool] = None):
        self.enabled = get_settings().enable_run_logging if enabled is None else enabled

    def log_batch(
        self,
        experiment: str,
        seed: int,
        n_runs: int,
        n_steps: int,
        stats: Optional[Dict[str, Any]] = None,
        latency_ms: Optional[float] = None,
    ) -> Optional[RunLogEntry]:
        """Log a finished batch and return the entry"""
        if not self.enabled:
            return None

        entry = RunLogEntry(
            timestamp=datetime.now(timezone.utc).isoformat(),
            experiment=experiment,
            seed=seed,
            n_runs=n_runs,
            n_steps=n_steps,
            stats=dict(stats or {}),
            latency_ms=latency_ms,
        )

        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(f"Batch: {json.dumps(asdict(entry), indent=2, default=str)}")
        else:
            summary = " ".join(f"{key}={value}" for key, value in sorted(entry.stats.items()))
            logger.info(
                f"Batch: experiment={entry.experiment} seed={entry.seed} "
                f"runs={entry.n_runs} steps={entry.n_steps} {summary}"
            )

        return entry


# Global logger instance
run_logger = RunLogger()
