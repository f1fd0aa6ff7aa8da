"""Tests for the drift checks."""

import numpy as np
import pytest

from markovsa.errors import DriftOverflow
from markovsa.markov import DriftCondition, FiniteMarkovChain, MM1Chain, check_drift, find_v4_parameters
from markovsa.markov.drift import UNVERIFIED_DV3


@pytest.fixture
def queue():
    """Load 3/7 queue truncated at 50"""
    return MM1Chain.from_load(3.0 / 7.0, truncation_level=50).truncated()


class TestCheckDrift:
    """Test check_drift for both conditions."""

    def test_v4_residuals(self):
        """Test the per-state slack (-δv + bs) - (Pv - v)."""
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])
        v = np.array([1.0, 3.0])
        s = np.array([1.0, 0.0])
        report = check_drift(chain, DriftCondition.V4, v, s, b=2.0, delta=0.5)

        expected = (-0.5 * v + 2.0 * s) - (chain.P @ v - v)
        np.testing.assert_allclose(report.residuals, expected)
        assert report.satisfied
        assert report.failing_states == []

    def test_v4_needs_delta(self):
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        with pytest.raises(ValueError, match="delta"):
            check_drift(chain, "V4", [1.0, 1.0], [1.0, 0.0], b=1.0)

    def test_dv3_queue_fails_far_out(self, queue):
        """Test that DV3 with V = βx and W = 1 + x fails away from the origin."""
        states = np.arange(queue.n_states, dtype=float)
        report = check_drift(
            queue,
            DriftCondition.DV3,
            0.5 * states,
            (states == 0).astype(float),
            b=10.0,
            W=1.0 + states,
        )

        assert not report.satisfied
        assert 0 not in report.failing_states
        assert report.failing_states[-1] == queue.n_states - 1
        assert report.unverified == UNVERIFIED_DV3
        assert report.summary()["condition"] == "DV3"

    def test_dv3_reports_small_w(self, queue):
        states = np.arange(queue.n_states, dtype=float)
        W = np.where(states < 2, 0.5, 1.0)
        report = check_drift(queue, DriftCondition.DV3, np.zeros(queue.n_states), np.ones(queue.n_states), b=1.0, W=W)

        assert report.w_below_one == [0, 1]

    def test_overflow_names_state(self):
        """Test that a non-finite V raises DriftOverflow at the offending state."""
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        with pytest.raises(DriftOverflow) as info:
            check_drift(chain, DriftCondition.DV3, [0.0, np.inf], [1.0, 0.0], b=1.0, W=[1.0, 1.0])
        assert info.value.state == 1

    def test_large_exponent_stays_finite(self):
        """Test that V values near the float limit are handled in log space."""
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])
        report = check_drift(chain, DriftCondition.DV3, [700.0, 710.0], [1.0, 1.0], b=20.0, W=[1.0, 1.0])

        assert np.all(np.isfinite(report.residuals))

    def test_table_shape(self):
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        with pytest.raises(ValueError, match="one value per state"):
            check_drift(chain, DriftCondition.V4, [1.0], [1.0, 0.0], b=1.0, delta=0.1)


class TestFindV4Parameters:
    """Test the (δ, b) search for exponential v on the queue."""

    def test_queue_with_exponential_v(self, queue):
        """Test δ against 1 - (αe^β + μe^{-β}) for β = ½."""
        states = np.arange(queue.n_states, dtype=float)
        report = find_v4_parameters(queue, np.exp(0.5 * states), (states == 0).astype(float))

        assert report is not None
        assert report.satisfied
        delta = report.params["delta"]
        assert 0.079 < delta <= 0.0809
        assert report.params["b"] > 0

    def test_no_parameters_without_small_set(self, queue):
        """Test that v ≡ 1 with s ≡ 0 admits no positive δ."""
        report = find_v4_parameters(queue, np.ones(queue.n_states), np.zeros(queue.n_states))

        assert report is None
