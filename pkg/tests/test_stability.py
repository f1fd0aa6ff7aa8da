"""Tests for the ODE@∞ stability probe."""

import pytest

from markovsa.errors import UnstableAtInfinity
from markovsa.ode import probe_stability
from markovsa.sa import scalar_linear_problem, sgd_problem


class TestProbeStability:
    """Test T_r, rho_r and c0 on scalar examples."""

    def test_unit_decay(self):
        """Test T_r = 0.70 for the flow of -θ."""
        mean_field = scalar_linear_problem(slope=-1.0).mean_field()
        probe = probe_stability(mean_field, sphere_samples=8)

        assert probe.T_r == pytest.approx(0.70)
        assert probe.rho_r == pytest.approx(0.5)
        assert probe.c0 == 1.0
        assert not probe.falsified

    def test_sgd_with_quarter_gain(self):
        """Test T_r = 2.78 for the SGD example with gain ¼."""
        mean_field = sgd_problem().mean_field(gain=0.25)
        probe = probe_stability(mean_field, sphere_samples=8)

        assert probe.T_r == pytest.approx(2.78)
        assert 0.5 <= probe.rho_r < 1.0
        assert probe.rho_by_c["inf"] < 1.0

    def test_growing_flow(self):
        """Test that an expanding ODE@∞ is reported as unstable."""
        mean_field = scalar_linear_problem(slope=1.0).mean_field()

        with pytest.raises(UnstableAtInfinity):
            probe_stability(mean_field, sphere_samples=8)

    def test_no_relaxation_before_horizon(self):
        """Test that a slow flow with a short horizon is reported, not certified."""
        mean_field = scalar_linear_problem(slope=-0.01).mean_field()
        probe = probe_stability(mean_field, horizon=2.0, sphere_samples=4)

        assert probe.T_r is None
        assert probe.falsified

    def test_json_fields(self):
        mean_field = scalar_linear_problem(slope=-1.0).mean_field()
        probe = probe_stability(mean_field, sphere_samples=4)

        assert set(probe.to_json()) == {"T_r", "rho_r", "c0", "falsified"}
