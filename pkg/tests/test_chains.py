"""Tests for finite chains and the M/M/1 queue."""

import numpy as np
import pytest

from markovsa.errors import NotIrreducible
from markovsa.markov import (
    FiniteMarkovChain,
    MM1Chain,
    chain_from_json,
    chain_to_json,
    fundamental_kernel,
    mm1_step,
    random_stochastic_matrix,
)
from markovsa.rng import run_generator


class TestFiniteMarkovChain:
    """Test FiniteMarkovChain construction and stationary law."""

    def test_two_state_stationary_law(self):
        """Test π for the lazy two-state chain."""
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        np.testing.assert_allclose(chain.pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-14)

    def test_sticky_two_state_stationary_law(self):
        """Test π = (2/3, 1/3) for P = [[0.9, 0.1], [0.2, 0.8]]."""
        chain = FiniteMarkovChain([[0.9, 0.1], [0.2, 0.8]])

        np.testing.assert_allclose(chain.pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-14)

    def test_rank_one_kernel_is_identity(self):
        """Test that P = 1⊗π gives Z = I."""
        chain = FiniteMarkovChain(np.tile([0.2, 0.5, 0.3], (3, 1)))

        np.testing.assert_allclose(chain.pi, [0.2, 0.5, 0.3], atol=1e-14)
        np.testing.assert_allclose(chain.fundamental_matrix, np.eye(3), atol=1e-12)

    def test_rows_must_sum_to_one(self):
        """Test that a non-stochastic matrix is rejected."""
        with pytest.raises(ValueError, match="sum to 1"):
            FiniteMarkovChain([[0.5, 0.4], [0.5, 0.5]])

    def test_not_square(self):
        with pytest.raises(ValueError, match="square"):
            FiniteMarkovChain([[1.0, 0.0]])

    def test_reducible_rejected(self):
        """Test that two closed classes are rejected."""
        with pytest.raises(NotIrreducible):
            FiniteMarkovChain([[1.0, 0.0], [0.0, 1.0]])

    def test_periodic_rejected(self):
        """Test that the flip chain is rejected as periodic."""
        with pytest.raises(NotIrreducible):
            FiniteMarkovChain([[0.0, 1.0], [1.0, 0.0]])

    def test_matrix_is_frozen(self):
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        with pytest.raises(ValueError):
            chain.P[0, 0] = 0.0

    def test_balance_on_random_chains(self):
        """Test πP = π on a corpus of random chains."""
        for seed in range(100):
            rng = run_generator(seed, 0)
            chain = FiniteMarkovChain(random_stochastic_matrix(int(rng.integers(2, 11)), rng))

            assert abs(chain.pi.sum() - 1.0) < 1e-12
            assert np.abs(chain.pi @ chain.P - chain.pi).max() < 1e-10

    def test_kernel_matches_neumann_series(self):
        """Test Z against the truncated series I + Σ(P^k - 1⊗π)."""
        for seed in range(100):
            rng = run_generator(seed, 0)
            chain = FiniteMarkovChain(random_stochastic_matrix(int(rng.integers(2, 11)), rng))

            assert np.abs(chain.fundamental_matrix - chain.neumann_kernel()).max() < 1e-10
            assert fundamental_kernel(chain).kernel_residual() < 1e-10

    def test_step_uses_cumulative_rows(self):
        """Test that a uniform below P(x, 0) stays in state 0."""
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])
        states = np.array([0, 0, 1, 1])
        uniforms = np.array([0.3, 0.7, 0.1, 0.99])

        np.testing.assert_array_equal(chain.step(states, uniforms), [0, 1, 0, 0])

    def test_step_frequencies(self):
        """Test empirical transition frequencies from state 0."""
        chain = FiniteMarkovChain([[0.2, 0.3, 0.5], [0.3, 0.3, 0.4], [1.0, 0.0, 0.0]])
        uniforms = run_generator(7, 0).random(200_000)
        nxt = chain.step(np.zeros(len(uniforms), dtype=np.int64), uniforms)
        freq = np.bincount(nxt, minlength=3) / len(nxt)

        np.testing.assert_allclose(freq, chain.P[0], atol=5e-3)

    def test_expectation(self):
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])

        assert chain.expectation(np.array([3.0, 0.0])) == pytest.approx(2.0)


class TestMM1Chain:
    """Test the uniformized M/M/1 queue."""

    def test_from_load(self):
        """Test α, μ and η for load 3/7."""
        chain = MM1Chain.from_load(3.0 / 7.0)

        assert chain.arrival_prob == pytest.approx(0.3)
        assert chain.service_prob == pytest.approx(0.7)
        assert chain.load == pytest.approx(3.0 / 7.0)
        assert chain.eta == pytest.approx(0.75)
        assert chain.ergodic

    def test_heavy_load_not_ergodic(self):
        chain = MM1Chain(0.6)

        assert not chain.ergodic
        with pytest.raises(ValueError):
            chain.eta

    def test_arrival_prob_range(self):
        with pytest.raises(ValueError):
            MM1Chain(1.0)

    def test_step_reflects_at_zero(self):
        """Test up-moves, down-moves and reflection at the empty queue."""
        chain = MM1Chain(0.3)
        states = np.array([0, 0, 3, 3])
        uniforms = np.array([0.9, 0.1, 0.9, 0.299])

        np.testing.assert_array_equal(chain.step(states, uniforms), [0, 1, 2, 4])

    def test_single_step_helper(self):
        chain = MM1Chain(0.3)
        rng = run_generator(0, 0)

        assert mm1_step(chain, 5, rng) in (4, 6)

    def test_truncated_is_geometric(self):
        """Test that the reflecting truncation has the renormalized geometric law."""
        chain = MM1Chain.from_load(3.0 / 7.0, truncation_level=30)
        finite = chain.truncated()

        assert finite.n_states == 31
        np.testing.assert_allclose(finite.pi, chain.geometric_pi(), atol=1e-10)

    def test_tail_cap(self):
        """Test that the tail beyond the cap carries less than the requested mass."""
        chain = MM1Chain.from_load(6.0 / 7.0)
        cap = chain.tail_cap(1e-12)

        assert chain.load ** (cap + 1) < 1e-12 * 10
        assert chain.load ** cap <= 1e-12 * (1 + 1e-9)

    def test_expectation_of_queue_length(self):
        """Test E_π[Q] = η."""
        chain = MM1Chain.from_load(3.0 / 7.0)

        assert chain.expectation(lambda q: q.astype(float)) == pytest.approx(0.75, rel=1e-12)

    def test_cap_hits(self):
        chain = MM1Chain(0.3, truncation_level=5)

        assert chain.cap_hits(np.array([0, 5, 6, 2])) == 2

    @pytest.mark.slow
    def test_occupation_law_is_geometric(self):
        """Test the occupation measure of 10^6 steps at load ½ against π(k) = 2^{-(k+1)} in total variation."""
        chain = MM1Chain.from_load(0.5)
        rng = run_generator(11, 0)
        visits = np.empty(1_000_000, dtype=np.int64)
        state = 0
        for i in range(len(visits)):
            state = mm1_step(chain, state, rng)
            visits[i] = state

        freq = np.bincount(visits) / len(visits)
        pi = 0.5 ** (np.arange(len(freq)) + 1)
        tail = 0.5 ** len(freq)
        assert 0.5 * (np.abs(freq - pi).sum() + tail) <= 0.01


class TestChainDocuments:
    """Test JSON documents for chains."""

    def test_finite_round_trip(self):
        chain = FiniteMarkovChain([[0.5, 0.5], [1.0, 0.0]])
        rebuilt = chain_from_json(chain_to_json(chain))

        np.testing.assert_array_equal(rebuilt.P, chain.P)

    def test_mm1_document(self):
        chain = chain_from_json({"mm1": {"arrival_prob": 0.3, "cap": 20}})

        assert isinstance(chain, MM1Chain)
        assert chain.truncation_level == 20

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            chain_from_json({"n_states": 3, "P": [[0.5, 0.5], [1.0, 0.0]]})
