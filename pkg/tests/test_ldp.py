"""Tests for the queue large-deviation toolkit."""

import math

import numpy as np
import pytest

from markovsa.counterexample import (
    RateFunction,
    excursion_probability,
    excursion_probability_exact,
    half_harmonic_gap,
    half_harmonic_sum,
    in_constraint_region,
    ldp_exponent,
    pinched_exponent,
    product_lower_bound,
    region_bounds,
    region_floor_path,
    sigma_inequalities,
    wilson_interval,
)
from markovsa.errors import DomainError
from markovsa.rng import run_generator


class TestRateFunction:
    """Test I(v) for the ±1 increments."""

    def test_identities(self):
        """Test I(-δ) = 0 and I(δ) = δ log(1 + δ/α) on seeded α."""
        for alpha in run_generator(0, 0).uniform(0.05, 0.45, size=50):
            rate = RateFunction(alpha)
            delta = rate.delta

            assert abs(rate(-delta)) < 1e-12
            assert abs(rate(delta) - delta * math.log1p(delta / alpha)) < 1e-12

    def test_reference_value(self):
        assert RateFunction(0.3)(0.4) == pytest.approx(0.33892, abs=1e-5)

    def test_convex_and_nonnegative(self):
        rate = RateFunction(0.3)
        v = np.linspace(-0.99, 0.99, 199)
        values = rate(v)

        assert np.all(values >= -1e-15)
        midpoints = rate(0.5 * (v[:-2] + v[2:]))
        assert np.all(midpoints <= 0.5 * (values[:-2] + values[2:]) + 1e-15)

    def test_quadratic_comparison(self):
        """Test I(δ) ≤ δ²/α."""
        for alpha in (0.1, 0.3, 0.45):
            rate = RateFunction(alpha)
            assert rate(rate.delta) <= rate.delta**2 / alpha

    def test_endpoints_and_outside(self):
        rate = RateFunction(0.3)

        assert rate(1.0) == pytest.approx(math.log(1.0 / 0.3))
        assert rate(-1.0) == pytest.approx(math.log(1.0 / 0.7))
        assert rate(1.5) == math.inf

    def test_legendre_dual(self):
        """Test I(v) = sup_s {sv - Λ(s)} on a grid of s."""
        rate = RateFunction(0.3)
        s = np.linspace(-10.0, 10.0, 200_001)
        for v in (-0.5, 0.0, 0.4, 0.8):
            dual = np.max(s * v - rate.log_mgf(s))
            assert dual == pytest.approx(rate(v), abs=1e-8)

    def test_from_load(self):
        rate = RateFunction.from_load(3.0 / 7.0)

        assert rate.alpha == pytest.approx(0.3)
        assert rate.mu == pytest.approx(0.7)
        assert rate.delta == pytest.approx(0.4)

    def test_alpha_range(self):
        with pytest.raises(DomainError):
            RateFunction(1.0)

    def test_sigma_needs_positive_delta(self):
        with pytest.raises(DomainError):
            RateFunction(0.5).sigma


class TestExponents:
    """Test the excursion exponents."""

    def test_exponent_value(self):
        rate = RateFunction(0.3)
        exponent = ldp_exponent(rate, 0.1)

        expected = -(0.1 * rate(0.44) + 0.4 * rate(0.4))
        assert exponent.value == pytest.approx(expected)
        assert exponent.quadratic_bound == pytest.approx(-0.16 / 0.6)

    def test_exponent_near_quadratic_bound(self):
        """Test exponent ≥ -δ²/(2α) - Cε² with a moderate constant."""
        rate = RateFunction(0.3)
        for eps in np.linspace(0.01, 0.2, 20):
            exponent = ldp_exponent(rate, eps)
            assert exponent.value >= exponent.quadratic_bound - 10.0 * eps**2

    def test_exponent_small_epsilon_limit(self):
        rate = RateFunction(0.3)

        assert ldp_exponent(rate, 1e-9).value == pytest.approx(-0.5 * rate(0.4), abs=1e-8)

    @pytest.mark.parametrize("alpha,eps", [(0.3, 0.5), (0.3, 0.0), (0.6, 0.1), (0.02, 0.1)])
    def test_domain_errors(self, alpha, eps):
        with pytest.raises(DomainError):
            ldp_exponent(RateFunction(alpha), eps)

    def test_pinched_below_exponent(self):
        """Test that climbing to 2δε costs more than the δ(1+ε) slope."""
        rate = RateFunction(0.3)

        assert pinched_exponent(rate, 0.1) < ldp_exponent(rate, 0.1).value
        with pytest.raises(DomainError):
            pinched_exponent(RateFunction(0.2), 0.1)


class TestConstraintRegion:
    """Test the region δε + min{δt, δ(1-t)} ≤ q_t ≤ 2δt."""

    def test_floor_path_inside(self):
        t = np.linspace(0.0, 1.0, 1001)

        assert in_constraint_region(region_floor_path(0.4, 0.1, t), t, 0.4, 0.1)

    def test_plain_tent_outside(self):
        """Test that the unshifted tent min{δt, δ(1-t)} violates the lower bound."""
        t = np.linspace(0.0, 1.0, 1001)

        assert not in_constraint_region(np.minimum(0.4 * t, 0.4 * (1.0 - t)), t, 0.4, 0.1)

    def test_unconstrained_before_epsilon(self):
        lower, upper = region_bounds(0.4, 0.1, np.array([0.05, 0.1]))

        assert lower[0] == -math.inf and upper[0] == math.inf
        assert lower[1] == pytest.approx(0.08) and upper[1] == pytest.approx(0.08)


class TestExcursionProbability:
    """Test the Monte Carlo estimate against the exact recursion."""

    def test_monte_carlo_matches_exact(self):
        rate = RateFunction(0.45)
        exact = excursion_probability_exact(rate, 0.1, 100)
        estimate = excursion_probability(rate, 0.1, 100, n_runs=20_000, seed=0)

        assert 0.0 < exact < 1.0
        se = math.sqrt(exact * (1.0 - exact) / estimate.n_runs)
        assert abs(estimate.frequency - exact) <= 4.0 * se
        assert estimate.wilson_low <= estimate.frequency <= estimate.wilson_high

    def test_exact_rate_tracks_exponent(self):
        """Test (1/n) log P against the pinched exponent within a factor of two."""
        rate = RateFunction(0.3)
        exponent = pinched_exponent(rate, 0.1)
        for n in (400, 800):
            log_rate = math.log(excursion_probability_exact(rate, 0.1, n)) / n
            assert 2.0 * exponent <= log_rate <= 0.5 * exponent

    def test_log_rate_none_without_hits(self):
        estimate = excursion_probability(RateFunction(0.3), 0.1, 400, n_runs=100, seed=0)

        assert estimate.successes == 0
        assert estimate.log_rate is None

    def test_wilson_interval(self):
        low, high = wilson_interval(50, 100)

        assert low < 0.5 < high
        assert wilson_interval(0, 100)[0] == pytest.approx(0.0, abs=1e-12)


class TestNumericLemmas:
    """Test the half-harmonic and σ inequalities."""

    def test_half_harmonic_values(self):
        assert half_harmonic_sum(2) == pytest.approx(1.0)
        assert half_harmonic_sum(10) == pytest.approx(6.456, abs=1e-3)

    def test_half_harmonic_gap_nonnegative(self):
        n = np.arange(2, 1_000_002, 2)

        assert np.all(half_harmonic_gap(n) >= 0.0)
        assert half_harmonic_gap(np.array([10]))[0] == pytest.approx(half_harmonic_sum(10) - (10 * math.log(2) - 1))

    def test_half_harmonic_needs_even(self):
        with pytest.raises(ValueError):
            half_harmonic_gap(np.array([3]))

    @pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4, 0.45])
    def test_sigma_inequalities(self, alpha):
        slack = sigma_inequalities(RateFunction(alpha))

        assert slack["sigma_minus_one_minus_delta"] >= 0.0
        assert slack["min_exp_slack"] >= -1e-12
        if alpha > 1.0 / 3.0:
            assert slack["sigma_delta_margin"] > 0.0
        else:
            assert slack["sigma_delta_margin"] is None

    def test_product_bound_grows_at_heavy_load(self):
        """Test that the log lower bound grows linearly in n at load 6/7."""
        rate = RateFunction.from_load(6.0 / 7.0)
        bounds = [product_lower_bound(rate, 0.1, n) for n in (1000, 2000)]

        assert bounds[0] > 0.0
        assert bounds[1] == pytest.approx(2.0 * bounds[0])
