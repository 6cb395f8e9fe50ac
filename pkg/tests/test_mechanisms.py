"""Randomization primitives, budget algebra, and stream plumbing."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpdep import (
    LaplaceNoiseSpec,
    PrivacyBudget,
    RngStream,
    compose_advanced,
    compose_basic,
    laplace_mechanism,
    laplace_sample,
    randomized_response,
    response_probability,
)

# First draw for (seed=7, stream=0), scale 1, recorded once from the inverse-CDF
# sampler and frozen. Any change to the sampling path must be deliberate.
GOLDEN_FIRST_DRAW = 1.3631518650116237


class TestLaplaceSample:
    def test_golden_first_draw(self):
        draw = laplace_sample(LaplaceNoiseSpec(0.0, 1.0), RngStream(7, 0))
        assert draw == GOLDEN_FIRST_DRAW

    def test_variance_scale_two(self):
        draws = laplace_sample(LaplaceNoiseSpec(0.0, 2.0), RngStream(1, 0), size=10**6)
        # Var(X^2) = 20 b^4 for Laplace(0, b)
        mc_sigma = math.sqrt(20 * 2.0**4 / 10**6)
        assert abs(draws.var() - 8.0) <= 3 * mc_sigma

    def test_degenerate_scale(self):
        draws = laplace_sample(LaplaceNoiseSpec(5.0, 1e-300), RngStream(2, 0), size=1000)
        assert np.all(np.abs(draws - 5.0) < 1e-290)

    def test_mean_matches_location(self):
        for scale in (0.5, 3.0):
            draws = laplace_sample(LaplaceNoiseSpec(-2.0, scale), RngStream(3, 0), size=10**6)
            mc_sigma = math.sqrt(2 * scale**2 / 10**6)
            assert abs(draws.mean() + 2.0) <= 4 * mc_sigma

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            LaplaceNoiseSpec(0.0, 0.0)
        with pytest.raises(ValueError):
            LaplaceNoiseSpec(0.0, -1.0)

    def test_deterministic_replay(self):
        a = laplace_sample(LaplaceNoiseSpec(0.0, 1.0), RngStream(9, 4), size=100)
        b = laplace_sample(LaplaceNoiseSpec(0.0, 1.0), RngStream(9, 4), size=100)
        c = laplace_sample(LaplaceNoiseSpec(0.0, 1.0), RngStream(9, 5), size=100)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestLaplaceMechanism:
    def test_huge_epsilon_is_nearly_exact(self):
        values = np.array([1.0, -2.0, 3.5])
        hits = 0
        for rep in range(100):
            out = laplace_mechanism(values, 1.0, 1e6, RngStream(11, rep))
            hits += np.all(np.abs(out - values) < 1e-3)
        assert hits >= 99

    def test_variance(self):
        out = laplace_mechanism(np.zeros(10**5), 2.0, 1.0, RngStream(12, 0))
        mc_sigma = math.sqrt(20 * 2.0**4 / 10**5)
        assert abs(out.var() - 8.0) <= 3 * mc_sigma

    def test_coordinates_uncorrelated(self):
        outs = np.array(
            [laplace_mechanism(np.zeros(3), 1.0, 1.0, RngStream(13, rep)) for rep in range(10**5)]
        )
        corr = np.corrcoef(outs.T)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 0.02)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            laplace_mechanism([0.0], 0.0, 1.0, RngStream(0))
        with pytest.raises(ValueError):
            laplace_mechanism([0.0], 1.0, -1.0, RngStream(0))


class TestRandomizedResponse:
    def test_pi_limits_and_values(self):
        assert response_probability(1e-12) == pytest.approx(0.5, abs=1e-12)
        assert response_probability(math.log(3)) == pytest.approx(0.75, abs=1e-12)
        for eps in (0.01, 0.1, 1.0, 5.0):
            expected = math.exp(eps) / (1 + math.exp(eps))
            assert abs(response_probability(eps) - expected) <= 1e-12

    def test_keep_rate(self):
        keeps = 0
        trials = 10**5
        base = RngStream(21, 0)
        for i in range(trials):
            bit, pi = randomized_response(1, 1.0, base.child(i))
            keeps += bit == 1
        p = math.e / (1 + math.e)
        sigma = math.sqrt(p * (1 - p) / trials)
        assert abs(keeps / trials - p) <= 3 * sigma
        assert pi == pytest.approx(p, abs=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            randomized_response(2, 1.0, RngStream(0))
        with pytest.raises(ValueError):
            randomized_response(1, 0.0, RngStream(0))


class TestBudgetAlgebra:
    def test_basic_examples(self):
        b = compose_basic(1, PrivacyBudget(0.3, 0.01))
        assert (b.epsilon, b.delta, b.varrho) == (0.3, 0.01, 0.0)
        b = compose_basic(4, PrivacyBudget(1.0, 0.04))
        assert (b.epsilon, b.delta) == (0.25, 0.01)
        assert compose_basic(10, PrivacyBudget(0.1)).epsilon == pytest.approx(0.01)

    @given(st.floats(min_value=1e-6, max_value=10), st.integers(min_value=1, max_value=64))
    def test_basic_exactness(self, eps, d):
        b = compose_basic(d, PrivacyBudget(eps, 0.0))
        assert abs(b.epsilon * d - eps) <= math.ulp(eps)

    def test_advanced_examples(self):
        rho = math.exp(-1)
        b = compose_advanced(1, PrivacyBudget(1.0, 0.1, rho))
        assert b.epsilon == pytest.approx(1 / math.sqrt(8), rel=1e-12)
        b = compose_advanced(4, PrivacyBudget(1.0, 0.1, rho))
        assert b.epsilon == pytest.approx(1 / math.sqrt(32), rel=1e-12)
        assert b.delta == pytest.approx(0.025)
        assert b.varrho == rho

    def test_advanced_monotone_in_d(self):
        budget = PrivacyBudget(0.5, 0.01, 0.1)
        eps = [compose_advanced(d, budget).epsilon for d in (1, 2, 5, 20)]
        assert all(a > b for a, b in zip(eps, eps[1:]))

    def test_boundary_rejections(self):
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 0.1, 1.0)
        with pytest.raises(ValueError):
            PrivacyBudget(0.0)
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 1.0)
        with pytest.raises(ValueError):
            compose_advanced(2, PrivacyBudget(1.0, 0.1, 0.0))
        with pytest.raises(ValueError):
            compose_basic(0, PrivacyBudget(1.0))


class TestRngStream:
    def test_child_deterministic_and_distinct(self):
        s = RngStream(42, 3)
        assert s.child(0) == RngStream(42, 3).child(0)
        kids = {s.child(i).stream for i in range(1000)}
        assert len(kids) == 1000
        assert all(RngStream(42, 3).child(i).seed == 42 for i in range(5))

    def test_rejects_negative_child(self):
        with pytest.raises(ValueError):
            RngStream(1).child(-1)

    def test_generator_restarts(self):
        s = RngStream(5, 6)
        assert s.generator().random() == s.generator().random()
