"""Process-wide settings"""

import os
from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


def find_env_file() -> Optional[str]:
    """
    .env for the MARKOVSA_* variables: MARKOVSA_ENV_FILE if set, else the
    experiment directory (cwd), else the checkout holding the markovsa package.
    """
    explicit = os.environ.get("MARKOVSA_ENV_FILE")
    if explicit:
        return explicit if Path(explicit).is_file() else None
    for directory in (Path.cwd(), Path(__file__).resolve().parent.parent):
        env_file = directory / ".env"
        if env_file.is_file():
            return str(env_file)
    return None


class Settings(BaseSettings):
    """Settings loaded from MARKOVSA_* environment variables"""

    model_config = SettingsConfigDict(
        env_prefix="MARKOVSA_",
        env_file=find_env_file(),
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Worker cap for Monte Carlo batches (None = available parallelism)
    threads: Optional[int] = None

    log_level: str = "INFO"
    output_dir: str = "results"
    enable_run_logging: bool = True

    # ODE@∞ is approximated at this finite scaling
    c_big: float = 1e6

    # RK4 step in τ units
    ode_step: float = 1e-3

    # Random draws are taken per run in blocks of this many steps
    block_size: int = 4096

    def worker_count(self, requested: Optional[int] = None) -> int:
        """Resolve the number of worker threads"""
        value = requested if requested is not None else self.threads
        if value is None:
            value = os.cpu_count() or 1
        return max(1, int(value))


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()
