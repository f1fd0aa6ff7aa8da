"""Experiment recipes behind the CLI subcommands; each writes its files and returns their paths"""

import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np

from markovsa.asymptotics import (
    AsymptoticCovariance,
    build_asymptotic_covariance,
    clt_experiment,
    fclt_experiment,
)
from markovsa.cli.reports import (
    CltSummary,
    CounterexampleSummary,
    DiagnoseReport,
    FcltProbe,
    FcltSummary,
    PoissonSummary,
    ProductMomentRow,
    ScheduleSummary,
    finite_or_none,
    matrix_or_none,
    write_csv,
    write_json,
)
from markovsa.counterexample import (
    CounterexampleConfig,
    RateFunction,
    ldp_exponent,
    product_moment,
    queue_bound_threshold,
    run_counterexample,
)
from markovsa.errors import DomainError, NotHurwitz, SingularOperator, UnstableAtInfinity
from markovsa.experiment import ExperimentConfig
from markovsa.markov import (
    DriftCondition,
    FiniteMarkovChain,
    MM1Chain,
    chain_from_json,
    check_drift,
    find_v4_parameters,
    random_stochastic_matrix,
    solve_poisson,
)
from markovsa.ode import probe_stability
from markovsa.rng import run_generator
from markovsa.sa import SAProblem, make_schedule, mm1_problem, scalar_linear_problem, sgd_problem

logger = logging.getLogger(__name__)


def build_problem(config: ExperimentConfig) -> SAProblem:
    noise = config.resolved_noise_std
    if config.problem == "sgd":
        return sgd_problem(noise_std=noise)
    if config.problem == "mm1":
        return mm1_problem(config.load, noise_std=noise, truncation_level=config.truncation_level)
    return scalar_linear_problem(slope=config.slope, noise_std=noise)


def _theory(problem: SAProblem, schedule, seed: int) -> Optional[AsymptoticCovariance]:
    try:
        return build_asymptotic_covariance(problem, schedule, seed=seed)
    except (NotHurwitz, ValueError) as e:
        logger.warning(f"no asymptotic covariance for {problem.name}: {e}")
        return None


def run_clt(config: ExperimentConfig, out: Path) -> List[Path]:
    """Histogram CSV and summary JSON per ρ"""
    written: List[Path] = []
    problem = build_problem(config)
    if problem.theta_star is None:
        raise DomainError(f"problem {problem.name} has no root to center on")
    for rho in config.rho:
        schedule = make_schedule(rho, config.gain)
        asymptotic = _theory(problem, schedule, config.seed)
        result = clt_experiment(
            problem,
            schedule,
            problem.theta_star,
            n_runs=config.n_runs,
            n_steps=config.n_steps,
            seed=config.seed,
            trim_rule=config.trim_sigmas,
            theta0_mean=config.theta0_mean,
            theta0_std=config.theta0_std,
            asymptotic=asymptotic,
            bins=config.bins,
            threads=config.threads,
        )
        tag = f"rho{rho:g}"
        hist_path = write_csv(
            out / f"clt_{tag}_hist.csv", ["bin_left", "bin_right", "count", "density"], result.histogram_table()
        )
        summary = CltSummary(
            rho=rho,
            gain=config.gain,
            noise_std=problem.noise_std,
            n_runs=config.n_runs,
            n_steps=config.n_steps,
            seed=config.seed,
            sigma_theta_theory=matrix_or_none(result.sigma_theta_theory),
            sigma_theta_empirical=matrix_or_none(result.empirical_var),
            sigma_theta_raw=matrix_or_none(result.raw_var),
            trim_sigmas=config.trim_sigmas,
            n_outliers=result.n_outliers,
            n_nonfinite=result.n_nonfinite,
            skewness=result.skewness,
            kurtosis=result.kurtosis,
            histogram_file=hist_path.name,
        )
        written += [hist_path, write_json(out / f"clt_{tag}.json", summary)]
    return written


def run_fclt(config: ExperimentConfig, out: Path) -> List[Path]:
    problem = build_problem(config)
    schedule = make_schedule(config.first_rho, config.gain)
    result = fclt_experiment(
        problem,
        schedule,
        n_blocks_burnin=config.n_blocks_burnin,
        T=config.fclt_T,
        n_runs=config.n_runs,
        seed=config.seed,
        theta0_mean=config.theta0_mean,
        theta0_std=config.theta0_std,
        tolerance=config.fclt_tolerance,
        threads=config.threads,
    )
    probes = [
        FcltProbe(
            t=float(result.probe_times[j]),
            step=result.probe_steps[j],
            empirical=finite_or_none(result.empirical_cov[j, 0, 0]),
            ou=float(result.ou_cov[j, 0, 0]),
            relative_error=result.relative_error[j],
        )
        for j in range(len(result.probe_steps))
    ]
    table = np.array([
        [p.t, p.step, np.nan if p.empirical is None else p.empirical, p.ou,
         np.nan if p.relative_error is None else p.relative_error]
        for p in probes
    ])
    summary = FcltSummary(
        rho=schedule.rho,
        gain=schedule.gain,
        n_runs=config.n_runs,
        seed=config.seed,
        block_start=result.block_start,
        T=config.fclt_T,
        tolerance=config.fclt_tolerance,
        passed=result.passed,
        n_nonfinite=result.n_nonfinite,
        probes=probes,
    )
    return [
        write_csv(out / "fclt_probes.csv", ["t", "step", "empirical", "ou", "relative_error"], table),
        write_json(out / "fclt.json", summary),
    ]


def run_counterexample_cmd(config: ExperimentConfig, out: Path) -> List[Path]:
    """Per-run CSV, histogram CSV, optional product moments and the summary JSON"""
    setup = CounterexampleConfig(
        load=config.load,
        n_steps=config.n_steps,
        n_runs=config.n_runs,
        seed=config.seed,
        theta0=config.theta0_mean,
        noise_std=config.resolved_noise_std,
        exceed_threshold=config.exceed_threshold,
        trim_sigmas=config.trim_sigmas,
    )
    result = run_counterexample(setup, threads=config.threads)
    written = [
        write_csv(
            out / "counterexample_runs.csv",
            ["run_id", "final_theta", "max_abs_theta", "blew_up"],
            result.per_run_table(),
        ),
        write_csv(
            out / "counterexample_hist.csv",
            ["bin_left", "bin_right", "count", "density"],
            np.column_stack([result.histogram[k] for k in ("bin_left", "bin_right", "count", "density")]),
        ),
    ]

    rows: List[ProductMomentRow] = []
    if config.n_grid:
        moments = product_moment(setup, config.n_grid, threads=config.threads)
        rows = [
            ProductMomentRow(
                n=n,
                log_mean=finite_or_none(moments.log_mean[j]),
                log_stderr=finite_or_none(moments.log_stderr[j]),
                negative_fraction=float(moments.negative_fraction[j]),
            )
            for j, n in enumerate(moments.n_grid)
        ]
        written.append(write_csv(
            out / "product_moments.csv",
            ["n", "log_mean", "log_stderr", "negative_fraction"],
            np.column_stack([moments.n_grid, moments.log_mean, moments.log_stderr, moments.negative_fraction]),
        ))

    rate = RateFunction.from_load(config.load)
    exponent = bound = None
    try:
        ldp = ldp_exponent(rate, config.ldp_epsilon)
        exponent, bound = ldp.value, ldp.quadratic_bound
    except DomainError as e:
        logger.info(f"no large-deviation exponent at load {config.load}: {e}")

    summary = CounterexampleSummary(
        load=config.load,
        alpha=setup.alpha,
        mu=setup.mu,
        eta=setup.eta,
        n_runs=config.n_runs,
        n_steps=config.n_steps,
        seed=config.seed,
        theta0=setup.theta0,
        sigma_theta_theory=result.sigma_theta_theory,
        trimmed_variance=finite_or_none(result.trimmed_var),
        raw_variance=finite_or_none(result.raw_var),
        n_outliers=result.n_outliers,
        blowup_fraction=result.blowup_fraction,
        exceed_threshold=config.exceed_threshold,
        exceed_fraction=result.exceed_fraction,
        ldp_epsilon=config.ldp_epsilon,
        ldp_exponent=exponent,
        quadratic_bound=bound,
        queue_bound_threshold=queue_bound_threshold(config.load, config.ldp_epsilon),
        product_moments=rows,
    )
    written.append(write_json(out / "counterexample.json", summary))
    return written


def _drift_summary(config: ExperimentConfig, problem: SAProblem) -> dict:
    chain = problem.chain
    if isinstance(chain, MM1Chain):
        chain = chain.truncated(config.truncation_level)
    states = np.arange(chain.n_states, dtype=np.float64)
    small = (states == 0).astype(np.float64)
    if config.drift_condition == "V4":
        report = find_v4_parameters(chain, np.exp(config.drift_beta * states), small)
        if report is None:
            return {"condition": "V4", "satisfied": False, "params": {"beta": config.drift_beta}}
    else:
        report = check_drift(
            chain,
            DriftCondition.DV3,
            config.drift_beta * states,
            small,
            b=config.drift_b,
            W=1.0 + states,
        )
    summary = report.summary()
    summary["params"] = dict(summary["params"], beta=config.drift_beta)
    return summary


def run_diagnose(config: ExperimentConfig, out: Path) -> List[Path]:
    """Drift check, ODE@∞ probe and Lyapunov solve in one report"""
    problem = build_problem(config)
    schedule = make_schedule(config.first_rho, config.gain)
    report = DiagnoseReport(problem=problem.name, rho=schedule.rho, gain=schedule.gain)
    report.drift = _drift_summary(config, problem)

    try:
        probe = probe_stability(problem.mean_field(gain=schedule.gain), seed=config.seed)
        report.T_r, report.rho_r, report.c0 = probe.T_r, probe.rho_r, probe.c0
        report.stability_falsified = probe.falsified
    except UnstableAtInfinity as e:
        report.unstable_at_infinity = True
        report.errors.append(f"UnstableAtInfinity: {e}")

    if not report.unstable_at_infinity and problem.theta_star is not None:
        try:
            asymptotic = build_asymptotic_covariance(problem, schedule, seed=config.seed)
            report.F = matrix_or_none(asymptotic.F)
            report.F_eigenvalues_real = [float(v) for v in asymptotic.eigenvalues.real]
            report.Sigma_zeta = matrix_or_none(asymptotic.Sigma_zeta)
            report.Sigma_theta = matrix_or_none(asymptotic.Sigma_theta)
        except (NotHurwitz, SingularOperator) as e:
            report.errors.append(f"{type(e).__name__}: {e}")
    return [write_json(out / "diagnose.json", report)]


def _poisson_chain(config: ExperimentConfig) -> FiniteMarkovChain:
    if config.chain_file is None:
        return FiniteMarkovChain(random_stochastic_matrix(config.n_states, run_generator(config.seed, 0)))
    with open(config.chain_file, "r") as f:
        chain = chain_from_json(json.load(f))
    return chain.truncated() if isinstance(chain, MM1Chain) else chain


def run_poisson(config: ExperimentConfig, out: Path) -> List[Path]:
    """ĝ for g given in the config or drawn from the seed"""
    chain = _poisson_chain(config)
    if config.poisson_g is None:
        g = run_generator(config.seed, 0, stream=1).standard_normal(chain.n_states)
    else:
        g = np.asarray(config.poisson_g, dtype=np.float64)
    solution = solve_poisson(chain, g)
    table_path = write_csv(
        out / "poisson.csv",
        ["state", "pi", "g", "g_hat"],
        np.column_stack([np.arange(chain.n_states), chain.pi, solution.g, solution.g_hat]),
    )
    summary = PoissonSummary(
        n_states=chain.n_states,
        seed=config.seed,
        pi=[float(p) for p in chain.pi],
        pi_g=float(solution.pi_g),
        residual=solution.residual(),
        kernel_residual=solution.kernel_residual(),
        table_file=table_path.name,
    )
    return [table_path, write_json(out / "poisson.json", summary)]


def run_schedule(config: ExperimentConfig, out: Path) -> List[Path]:
    """Exact clock values and summability partial sums at decades"""
    schedule = make_schedule(config.first_rho, config.gain)
    sums = schedule.check_summability(config.decades)
    horizons = [int(N) for N in sums["N"]]
    taus = [schedule.tau(N) for N in horizons]
    table_path = write_csv(
        out / "schedule.csv",
        ["N", "tau", "alpha_sum", "alpha_sq_sum", "alpha_sq_tail", "gamma"],
        np.column_stack([
            horizons, taus, sums["alpha_sum"], sums["alpha_sq_sum"], sums["alpha_sq_tail"],
            schedule.gamma(np.asarray(horizons)),
        ]),
    )
    summary = ScheduleSummary(
        rho=schedule.rho,
        gain=schedule.gain,
        gamma_limit=schedule.gamma_limit,
        unit_gamma=schedule.unit_gamma,
        n_min=schedule.n_min,
        tau={str(N): tau for N, tau in zip(horizons, taus)},
        table_file=table_path.name,
    )
    return [table_path, write_json(out / "schedule.json", summary)]


RECIPES = {
    "clt": run_clt,
    "fclt": run_fclt,
    "counterexample": run_counterexample_cmd,
    "diagnose": run_diagnose,
    "poisson": run_poisson,
    "schedule": run_schedule,
}
