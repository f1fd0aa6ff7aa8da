"""Tests for the CLT and FCLT experiments."""

import math

import numpy as np
import pytest

from markovsa.asymptotics import (
    block_start_index,
    build_asymptotic_covariance,
    clt_experiment,
    fclt_experiment,
    histogram,
    second_moment,
    trim_mask,
)
from markovsa.sa import make_schedule, sgd_problem


class TestTrimRule:
    """Test trim_mask and the moment helpers."""

    def test_theoretical_scale(self):
        z = np.array([[0.0], [5.0], [30.0], [np.nan], [-24.0]])
        kept = trim_mask(z, np.array([2.5]), sigmas=10.0)

        np.testing.assert_array_equal(kept, [True, True, False, False, True])

    def test_robust_scale(self):
        """Test the MAD fallback when no theoretical scale is given."""
        z = np.concatenate([np.linspace(-1.0, 1.0, 99), [1e6]])[:, None]
        kept = trim_mask(z, None)

        assert kept.sum() == 99
        assert not kept[-1]

    def test_zero_scale_trims_nothing(self):
        z = np.array([[0.0], [3.0]])

        assert trim_mask(z, np.array([0.0])).all()

    def test_second_moment(self):
        z = np.array([[1.0, 0.0], [-1.0, 2.0]])

        np.testing.assert_allclose(second_moment(z), [[1.0, -1.0], [-1.0, 2.0]])
        assert np.isnan(second_moment(np.zeros((0, 2)))).all()

    def test_histogram_density(self):
        h = histogram(np.linspace(0.0, 1.0, 101), bins=10)
        widths = h["bin_right"] - h["bin_left"]

        assert h["count"].sum() == 101
        assert np.sum(h["density"] * widths) == pytest.approx(1.0)


class TestCltExperiment:
    """Test the normalized error at the final step."""

    def test_needs_two_runs(self):
        problem = sgd_problem()

        with pytest.raises(ValueError, match="n_runs must be ≥ 2"):
            clt_experiment(problem, make_schedule(1.0, 0.25), [0.0], n_runs=1, n_steps=10, seed=0)

    def test_sgd_variance(self):
        """Test the trimmed variance of z_N against Σ_θ = 6.25."""
        problem = sgd_problem(noise_std=10.0)
        schedule = make_schedule(1.0, 0.25)
        asymptotic = build_asymptotic_covariance(problem, schedule)
        result = clt_experiment(
            problem,
            schedule,
            [0.0],
            n_runs=1000,
            n_steps=10_000,
            seed=0,
            theta0_std=1.0,
            asymptotic=asymptotic,
        )

        assert result.sigma_theta_theory[0, 0] == pytest.approx(6.25)
        assert result.empirical_var[0, 0] == pytest.approx(6.25, rel=0.25)
        assert result.n_nonfinite == 0
        assert 2.3 <= result.kurtosis[0] <= 3.7
        assert result.histogram_table().shape[1] == 4

    def test_reproducible(self):
        problem = sgd_problem()
        schedule = make_schedule(0.8, 0.25)
        first = clt_experiment(problem, schedule, [0.0], n_runs=20, n_steps=200, seed=9, threads=1)
        second = clt_experiment(problem, schedule, [0.0], n_runs=20, n_steps=200, seed=9, threads=3)

        np.testing.assert_array_equal(first.z, second.z)

    @pytest.mark.slow
    def test_sgd_below_one(self):
        """Test ρ = 0.9 against Σ_θ = 3.125 with θ_0 ~ N(0, 1).

        The finite-N bias at N = 10^6 is about 13%, so the run count keeps
        the sampling error near 3%.
        """
        problem = sgd_problem(noise_std=10.0)
        schedule = make_schedule(0.9, 0.25)
        asymptotic = build_asymptotic_covariance(problem, schedule)
        result = clt_experiment(
            problem, schedule, [0.0], n_runs=2000, n_steps=1_000_000, seed=1,
            theta0_std=1.0, asymptotic=asymptotic,
        )

        assert result.empirical_var[0, 0] == pytest.approx(3.125, rel=0.25)
        assert 2.3 <= result.kurtosis[0] <= 3.7

    @pytest.mark.slow
    def test_large_initial_spread_biases_variance(self):
        """Test that θ_0 ~ N(0, 50²) at ρ = 1 leaves a variance far above Σ_θ at N = 10^6."""
        problem = sgd_problem(noise_std=10.0)
        schedule = make_schedule(1.0, 0.25)
        result = clt_experiment(
            problem, schedule, [0.0], n_runs=500, n_steps=1_000_000, seed=2,
            theta0_std=50.0, asymptotic=build_asymptotic_covariance(problem, schedule),
        )

        assert result.raw_var[0, 0] >= 10.0 * 6.25


class TestFcltExperiment:
    """Test the restarted-ODE error process against the OU covariance."""

    def test_block_start_index(self):
        schedule = make_schedule(1.0, 1.0)
        m = block_start_index(schedule, 3)

        assert schedule.tau(m) >= 3.0
        assert schedule.tau(m - 1) < schedule.tau(block_start_index(schedule, 2)) + 1.0

    def test_sgd_rho_one(self):
        """Test the final-probe variance against 6.25(1 - e^{-2})."""
        problem = sgd_problem(noise_std=10.0)
        schedule = make_schedule(1.0, 0.25)
        result = fclt_experiment(problem, schedule, n_blocks_burnin=2, T=2.0, n_runs=500, seed=0)

        assert result.probe_times[-1] == pytest.approx(2.0, abs=0.01)
        assert result.ou_cov[-1, 0, 0] == pytest.approx(
            6.25 * (1.0 - math.exp(-result.probe_times[-1])), rel=1e-8
        )
        assert result.relative_error[-1] <= 0.25
        assert result.passed
        assert result.n_nonfinite == 0

    def test_needs_two_runs(self):
        with pytest.raises(ValueError, match="n_runs must be ≥ 2"):
            fclt_experiment(sgd_problem(), make_schedule(1.0, 0.25), 1, 1.0, n_runs=1, seed=0)
