"""Tests for the noise covariance and the Lyapunov equation."""

from unittest.mock import patch

import numpy as np
import pytest

from markovsa.asymptotics import (
    AsymptoticCovariance,
    build_asymptotic_covariance,
    covariance_factor,
    lyapunov_integral,
    lyapunov_residual,
    noise_covariance_batch_means,
    noise_covariance_exact,
    scalar_sigma_theta,
    solve_lyapunov,
)
from markovsa.errors import NotHurwitz, SingularOperator
from markovsa.markov import FiniteMarkovChain, random_stochastic_matrix
from markovsa.rng import run_generator
from markovsa.sa import linear_problem, make_schedule, sgd_problem


def hurwitz_matrix(d: int, seed: int) -> np.ndarray:
    rng = run_generator(seed, 0)
    M = rng.standard_normal((d, d))
    return M - (np.max(np.linalg.eigvals(M).real) + 1.0) * np.eye(d)


def spd_matrix(d: int, seed: int) -> np.ndarray:
    rng = run_generator(seed, 0, stream=1)
    M = rng.standard_normal((d, d))
    return M @ M.T + np.eye(d)


def state_only_problem(P, b):
    """f(θ, x) = b(x): the noise does not depend on θ"""
    chain = FiniteMarkovChain(P)
    return linear_problem(chain, np.zeros((chain.n_states, 1, 1)), np.asarray(b, dtype=float).reshape(-1, 1))


class TestSolveLyapunov:
    """Test FΣ + ΣFᵀ + Σ_ζ = 0."""

    def test_scalar(self):
        """Test Σ_θ = 6.25 for F = -½, Σ_ζ = 6.25."""
        assert solve_lyapunov(np.array([[-0.5]]), np.array([[6.25]]))[0, 0] == pytest.approx(6.25, rel=1e-12)

    @pytest.mark.parametrize("d", [2, 5, 12])
    def test_residual(self, d):
        """Test the residual for the Kronecker path and the Bartels-Stewart path."""
        F = hurwitz_matrix(d, d)
        Q = spd_matrix(d, d)
        sigma = solve_lyapunov(F, Q)

        assert lyapunov_residual(F, sigma, Q) < 1e-10 * max(1.0, np.abs(Q).max())
        np.testing.assert_allclose(sigma, sigma.T)
        assert np.all(np.linalg.eigvalsh(sigma) > 0)

    def test_not_hurwitz(self):
        with pytest.raises(NotHurwitz):
            solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))

    def test_residual_above_tolerance(self):
        """Test that a solve leaving a large residual raises instead of returning."""
        with patch("markovsa.asymptotics.covariance.lyapunov_residual", return_value=1e-3):
            with pytest.raises(SingularOperator, match="residual"):
                solve_lyapunov(np.array([[-0.5]]), np.array([[6.25]]))

    def test_integral_form(self):
        """Test Σ_θ = ∫₀^∞ e^{Fs} Σ_ζ e^{Fᵀs} ds."""
        F = hurwitz_matrix(3, 7)
        Q = spd_matrix(3, 7)

        np.testing.assert_allclose(lyapunov_integral(F, Q), solve_lyapunov(F, Q), rtol=1e-7, atol=1e-9)

    def test_scalar_closed_form(self):
        """Test σ²g²/(8g - γ) for the SGD example."""
        assert scalar_sigma_theta(-4.0, 10.0, 0.25, 1.0) == pytest.approx(6.25)
        assert scalar_sigma_theta(-4.0, 10.0, 0.25, 0.0) == pytest.approx(3.125)
        with pytest.raises(NotHurwitz):
            scalar_sigma_theta(-4.0, 10.0, 0.1, 1.0)


class TestNoiseCovariance:
    """Test Σ_ζ exactly and by batch means."""

    @pytest.fixture
    def problem(self):
        chain = FiniteMarkovChain([[0.1, 0.6, 0.3], [0.5, 0.2, 0.3], [0.3, 0.3, 0.4]])
        A = np.tile(-np.eye(1), (3, 1, 1))
        b = np.array([[1.0], [-2.0], [0.5]])
        return linear_problem(chain, A, b)

    def test_iid_noise_only(self):
        """Test Σ_ζ = σ²I when f does not depend on the state."""
        problem = sgd_problem(noise_std=10.0)
        sigma = noise_covariance_exact(problem.chain, problem.f, np.zeros(1), noise_std=10.0)

        assert sigma[0, 0] == pytest.approx(100.0)

    def test_exact_is_symmetric_psd(self, problem):
        sigma = noise_covariance_exact(problem.chain, problem.f, problem.theta_star)

        assert sigma.shape == (1, 1)
        assert sigma[0, 0] > 0

    def test_two_state_example(self):
        """Test Σ_ζ = 34/3 for b = (1, -2) on P = [[0.9, 0.1], [0.2, 0.8]]."""
        problem = state_only_problem([[0.9, 0.1], [0.2, 0.8]], [1.0, -2.0])
        sigma = noise_covariance_exact(problem.chain, problem.f, np.zeros(1))

        assert sigma[0, 0] == pytest.approx(34.0 / 3.0, rel=1e-12)

    def test_batch_means_agree_on_corpus(self):
        """Test the exact Σ_ζ against 10^6-step batch means within three standard errors."""
        corpus = [state_only_problem([[0.9, 0.1], [0.2, 0.8]], [1.0, -2.0])]
        for seed in range(3):
            rng = run_generator(seed, 0, stream=2)
            size = int(rng.integers(2, 11))
            corpus.append(state_only_problem(random_stochastic_matrix(size, rng), rng.standard_normal(size)))

        for seed, problem in enumerate(corpus):
            exact = noise_covariance_exact(problem.chain, problem.f, np.zeros(1))
            estimate, stderr = noise_covariance_batch_means(problem, np.zeros(1), n_steps=1_000_000, seed=seed)

            assert abs(estimate[0, 0] - exact[0, 0]) <= 3.0 * stderr[0, 0]

    def test_batch_means_reproducible(self, problem):
        first = noise_covariance_batch_means(problem, problem.theta_star, n_steps=2_000, n_batches=4, seed=3)
        second = noise_covariance_batch_means(problem, problem.theta_star, n_steps=2_000, n_batches=4, seed=3)

        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_batch_means_arguments(self, problem):
        with pytest.raises(ValueError):
            noise_covariance_batch_means(problem, problem.theta_star, n_steps=10, n_batches=1)


class TestAsymptoticCovariance:
    """Test the linearization of the worked examples."""

    def test_sgd_rho_one(self):
        """Test F = -½ and Σ_θ = 6.25 for g = ¼, σ = 10."""
        asymptotic = build_asymptotic_covariance(sgd_problem(noise_std=10.0), make_schedule(1.0, 0.25))

        assert asymptotic.F[0, 0] == pytest.approx(-0.5)
        assert asymptotic.Sigma_zeta[0, 0] == pytest.approx(6.25)
        assert asymptotic.Sigma_theta[0, 0] == pytest.approx(6.25)
        assert asymptotic.residual() < 1e-10

    def test_sgd_rho_below_one(self):
        asymptotic = build_asymptotic_covariance(sgd_problem(noise_std=10.0), make_schedule(0.9, 0.25))

        assert asymptotic.gamma == 0.0
        assert asymptotic.Sigma_theta[0, 0] == pytest.approx(3.125)

    def test_small_gain_is_not_hurwitz(self):
        """Test that g·f̄'(θ*) + ½ ≥ 0 has no Lyapunov solution."""
        with pytest.raises(NotHurwitz):
            build_asymptotic_covariance(sgd_problem(), make_schedule(1.0, 0.1))

    def test_factor(self):
        Q = spd_matrix(3, 2)
        D = covariance_factor(Q)

        np.testing.assert_allclose(D @ D.T, Q, atol=1e-12)

    def test_singular_factor(self):
        Q = np.array([[1.0, 1.0], [1.0, 1.0]])
        D = covariance_factor(Q)

        np.testing.assert_allclose(D @ D.T, Q, atol=1e-12)

    def test_to_dict(self):
        asymptotic = AsymptoticCovariance.from_parts(np.array([[-1.0]]), 1.0, np.array([[2.0]]))

        assert asymptotic.to_dict()["Sigma_theta"] == [[2.0]]
        assert asymptotic.to_dict()["F_eigenvalues_real"] == [-0.5]
