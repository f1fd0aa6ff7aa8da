"""markovsa command line: one subcommand per experiment"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click

from markovsa import __version__
from markovsa.cli.commands import RECIPES
from markovsa.cli.reports import schemas
from markovsa.config import get_settings
from markovsa.errors import ConfigError, MarkovSAError
from markovsa.experiment import ExperimentConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
        force=True,
    )


def common_options(command: Callable) -> Callable:
    """Flags shared by every experiment; a given flag wins over the config file"""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML experiment config"),
        click.option("--seed", type=click.IntRange(min=0), help="Master seed"),
        click.option("--out", "output_dir", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--threads", type=click.IntRange(min=1), help="Worker thread cap"),
        click.option("--runs", "n_runs", type=int, help="Monte Carlo runs"),
        click.option("--steps", "n_steps", type=int, help="Steps per run"),
        click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False)),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def load_config(experiment: str, config_path: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    overrides = dict(overrides, experiment=experiment)
    if config_path is None:
        data = {key: value for key, value in overrides.items() if value is not None}
        if "output_dir" not in data:
            data["output_dir"] = get_settings().output_dir
        return ExperimentConfig.from_mapping(data)
    return ExperimentConfig.from_file(config_path, **overrides)


def run_experiment(experiment: str, config_path: Optional[str], log_level: Optional[str], **overrides: Any) -> None:
    """Load, run and write; exits 2 on config errors and 3 on runtime failures"""
    configure_logging(log_level)
    try:
        config = load_config(experiment, config_path, overrides)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        logger.info(f"Running {experiment} (seed={config.seed}, runs={config.n_runs}) into {out}")
        written = RECIPES[experiment](config, out)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except (MarkovSAError, ArithmeticError, ValueError, OSError) as e:
        logger.error(f"{experiment} failed: {e}")
        click.echo(f"{experiment} failed: {type(e).__name__}: {e}", err=True)
        sys.exit(EXIT_RUNTIME)

    for path in written:
        click.echo(str(path))


@click.group()
@click.version_option(__version__, prog_name="markovsa")
def cli() -> None:
    """Stochastic approximation with Markovian noise: experiments and diagnostics."""


@cli.command()
@common_options
@click.option("--rho", "rho", multiple=True, type=float, help="Step-size exponent; repeat to sweep")
def clt(config_path, log_level, rho, **overrides):
    """Normalized-error histograms against the Lyapunov covariance."""
    run_experiment("clt", config_path, log_level, rho=list(rho) or None, **overrides)


@cli.command()
@common_options
def fclt(config_path, log_level, **overrides):
    """Late-block scaled error against the OU covariance."""
    run_experiment("fclt", config_path, log_level, **overrides)


@cli.command()
@common_options
@click.option("--load", type=float, help="Queue load ρ = α/μ")
def counterexample(config_path, log_level, **overrides):
    """M/M/1-driven SA: outliers, blowups and product moments."""
    run_experiment("counterexample", config_path, log_level, **overrides)


@cli.command()
@common_options
def diagnose(config_path, log_level, **overrides):
    """Drift, ODE@∞ stability and Lyapunov report."""
    run_experiment("diagnose", config_path, log_level, **overrides)


@cli.command()
@common_options
def poisson(config_path, log_level, **overrides):
    """Solve Poisson's equation for a finite chain."""
    run_experiment("poisson", config_path, log_level, **overrides)


@cli.command()
@common_options
def schedule(config_path, log_level, **overrides):
    """Step-size clock and summability table."""
    run_experiment("schedule", config_path, log_level, **overrides)


@cli.command()
def schema():
    """Print the JSON schemas of the summary files."""
    click.echo(json.dumps(schemas(), sort_keys=True, indent=2))


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
