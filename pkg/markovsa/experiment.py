"""
Experiment documents.

A config file is a flat YAML mapping, one `key: value` per line, lists
written `[a, b]`. Every key is optional and unknown keys are rejected.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from markovsa.errors import ConfigError

logger = logging.getLogger(__name__)

Experiment = Literal["clt", "fclt", "counterexample", "diagnose", "poisson", "schedule"]
ProblemName = Literal["sgd", "mm1", "scalar_linear"]


class ExperimentConfig(BaseModel):
    """
    Parameters of one experiment run.

    `rho` is a list so that `clt` can sweep it; every other experiment uses
    its first entry.
    """
    model_config = ConfigDict(extra="forbid")

    experiment: Experiment = "clt"
    seed: int = 0
    n_runs: int = 500
    n_steps: int = 10_000
    threads: Optional[int] = None
    output_dir: str = "results"

    # Recursion
    problem: ProblemName = "sgd"
    rho: List[float] = [1.0]
    gain: float = 0.25
    # None picks 10 for the SGD example and 1 otherwise
    noise_std: Optional[float] = None
    slope: float = -1.0
    theta0_mean: float = 0.0
    theta0_std: float = 0.0

    # CLT / FCLT
    trim_sigmas: float = 10.0
    bins: int = 50
    n_blocks_burnin: int = 2
    fclt_T: float = 2.0
    fclt_tolerance: float = 0.25

    # Counterexample
    load: float = 3.0 / 7.0
    exceed_threshold: float = 1e10
    n_grid: List[int] = []
    ldp_epsilon: float = 0.1

    # Diagnose / Poisson
    drift_condition: Literal["V4", "DV3"] = "V4"
    drift_beta: float = 0.5
    drift_b: float = 10.0
    truncation_level: int = 50
    chain_file: Optional[str] = None
    n_states: int = 5
    poisson_g: Optional[List[float]] = None

    # Schedule
    decades: int = 6

    @field_validator("n_runs")
    @classmethod
    def check_runs(cls, value: int) -> int:
        if value < 2:
            raise ValueError("n_runs must be ≥ 2")
        return value

    @field_validator("n_steps", "bins", "n_blocks_burnin", "n_states", "decades")
    @classmethod
    def check_positive_int(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("rho")
    @classmethod
    def check_rho(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("rho needs at least one value")
        bad = [r for r in value if not 0.5 < r <= 1.0]
        if bad:
            raise ValueError(f"rho must lie in (1/2, 1], got {bad}")
        return value

    @field_validator("gain", "fclt_T", "trim_sigmas", "exceed_threshold")
    @classmethod
    def check_positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("must be positive")
        return value

    @field_validator("noise_std", "theta0_std")
    @classmethod
    def check_nonnegative(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0:
            raise ValueError("must be nonnegative")
        return value

    @field_validator("load")
    @classmethod
    def check_load(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"load must lie in (0, 1) for an ergodic queue, got {value}")
        return value

    @field_validator("ldp_epsilon")
    @classmethod
    def check_epsilon(cls, value: float) -> float:
        if not 0.0 < value < 0.5:
            raise ValueError("ldp_epsilon must lie in (0, 1/2)")
        return value

    @field_validator("n_grid")
    @classmethod
    def check_grid(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("n_grid must be increasing positive integers")
        return value

    @property
    def first_rho(self) -> float:
        return self.rho[0]

    @property
    def resolved_noise_std(self) -> float:
        if self.noise_std is not None:
            return self.noise_std
        return 10.0 if self.problem == "sgd" and self.experiment != "counterexample" else 1.0

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Validate a mapping, turning pydantic failures into ConfigError"""
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            messages = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(messages) from e

    @classmethod
    def read_mapping(cls, config_path: Union[str, Path]) -> Dict[str, Any]:
        """Raw key-value mapping from a YAML file"""
        path = Path(config_path)
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a key-value mapping")
        return data

    @classmethod
    def from_file(cls, config_path: Union[str, Path], **overrides: Any) -> "ExperimentConfig":
        """Load a config file; non-None overrides win over file values"""
        data = cls.read_mapping(config_path)
        data.update({key: value for key, value in overrides.items() if value is not None})
        logger.debug(f"Loaded config from {config_path} with overrides {sorted(overrides)}")
        return cls.from_mapping(data)

    def to_file(self, config_path: Union[str, Path]) -> None:
        with open(config_path, "w") as f:
            yaml.safe_dump(self.model_dump(), f, sort_keys=True, default_flow_style=None)
