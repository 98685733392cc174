"""Tests for the leapfrog integrator and the randomized HMC transition."""

import numpy as np
import pytest

from copsv.hmc import HmcSettings, TargetDensity, hmc_step, leapfrog

STD_NORMAL = TargetDensity(
    log_density=lambda q: -0.5 * float(q @ q),
    gradient=lambda q: -q,
)


class TestLeapfrog:
    def test_hand_computed_single_step(self):
        """One step on U = q^2/2 from (q, p) = (1, 0) with eps = 0.1.

        p_half = -0.05, q' = 1 + 0.1 * (-0.05) = 0.995,
        p' = -0.05 + 0.05 * (-0.995) = -0.09975.
        """
        q, p = leapfrog(np.array([1.0]), np.array([0.0]), 0.1, 1, lambda q: -q)
        assert q[0] == pytest.approx(0.995, abs=1e-15)
        assert p[0] == pytest.approx(-0.09975, abs=1e-15)

    def test_vanishing_step_size_is_identity(self):
        rng = np.random.default_rng(0)
        q0 = rng.normal(size=5)
        p0 = rng.normal(size=5)
        q, p = leapfrog(q0, p0, 1e-12, 10, lambda q: -q)
        assert np.allclose(q, q0, atol=1e-10)
        assert np.allclose(p, p0, atol=1e-10)

    def test_reversibility(self):
        """Integrating forward, flipping momentum, and integrating back
        returns the initial state to floating-point accuracy."""
        rng = np.random.default_rng(1)
        q0 = rng.normal(size=8)
        p0 = rng.normal(size=8)
        grad = lambda q: -q - 0.3 * q ** 3
        q1, p1 = leapfrog(q0, p0, 0.05, 25, grad)
        q2, p2 = leapfrog(q1, -p1, 0.05, 25, grad)
        assert np.max(np.abs(q2 - q0)) < 1e-10
        assert np.max(np.abs(-p2 - p0)) < 1e-10

    def test_energy_error_second_order(self):
        """Halving eps (at fixed total time) divides the energy error by ~4."""
        rng = np.random.default_rng(2)
        q0 = rng.normal(size=4)
        p0 = rng.normal(size=4)

        def energy_error(eps, n):
            q, p = leapfrog(q0, p0, eps, n, lambda q: -q)
            h0 = 0.5 * (q0 @ q0 + p0 @ p0)
            h1 = 0.5 * (q @ q + p @ p)
            return abs(h1 - h0)

        e1 = energy_error(0.2, 50)
        e2 = energy_error(0.1, 100)
        assert 3.0 < e1 / e2 < 5.0


class TestHmcStep:
    def test_high_acceptance_at_small_step_size(self):
        rng = np.random.default_rng(3)
        settings = HmcSettings(eps_max=1e-4, l_max=5)
        q = np.array([0.7, -0.2])
        accepted = 0
        for _ in range(200):
            q, ok = hmc_step(q, STD_NORMAL, settings, rng)
            accepted += ok
        assert accepted >= 199

    @pytest.mark.slow
    def test_standard_normal_moments(self):
        """Long chain on N(0, I) reproduces mean zero and unit variance."""
        rng = np.random.default_rng(4)
        settings = HmcSettings(eps_max=0.9, l_max=10)
        q = np.zeros(1)
        draws = np.empty(50000)
        for i in range(draws.size):
            q, _ = hmc_step(q, STD_NORMAL, settings, rng)
            draws[i] = q[0]
        assert abs(draws.mean()) < 0.05
        assert abs(draws.var() - 1.0) < 0.1

    def test_non_finite_gradient_rejects(self):
        """A target whose gradient blows up outside a box never moves there."""

        def log_density(q):
            if np.any(np.abs(q) > 1.0):
                return -np.inf
            return 0.0

        def gradient(q):
            if np.any(np.abs(q) > 1.0):
                return np.full(q.shape, np.nan)
            return np.zeros(q.shape)

        target = TargetDensity(log_density, gradient)
        rng = np.random.default_rng(5)
        settings = HmcSettings(eps_max=3.0, l_max=8)
        q = np.array([0.0])
        rejected = 0
        for _ in range(300):
            q, ok = hmc_step(q, target, settings, rng)
            rejected += not ok
            assert np.all(np.isfinite(q))
            assert abs(q[0]) <= 1.0
        assert rejected > 0

    def test_deterministic_given_seed(self):
        settings = HmcSettings(eps_max=0.5, l_max=7)

        def run(seed):
            rng = np.random.default_rng(seed)
            q = np.array([1.0, 2.0])
            out = []
            for _ in range(50):
                q, _ = hmc_step(q, STD_NORMAL, settings, rng)
                out.append(q.copy())
            return np.array(out)

        assert np.array_equal(run(42), run(42))
        assert not np.array_equal(run(42), run(43))

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            HmcSettings(eps_max=0.0, l_max=5)
        with pytest.raises(ValueError):
            HmcSettings(eps_max=0.1, l_max=0)
