"""Bin geometry, private histograms, and projection intervals."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpdep import (
    BinGrid,
    RngStream,
    bin_index,
    projection_interval_central,
    projection_interval_local,
    randomized_histogram,
    stable_histogram,
)
from dpdep.histograms import _argmax_bin


class TestBinIndex:
    def test_examples(self):
        assert bin_index(0.0, 1.0) == 0
        assert bin_index(1.0, 1.0) == 0  # right edge belongs to the bin
        assert bin_index(1.0000001, 1.0) == 1
        assert bin_index(-1.0, 1.0) == -1

    def test_centers_map_to_own_bin(self):
        for tau in (0.5, 1.0, 3.7):
            ks = np.arange(-50, 51)
            assert np.array_equal(bin_index(2 * tau * ks, tau), ks)

    @given(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_membership(self, x, tau):
        k = bin_index(x, tau)
        # edge values may sit within a rounding error of the bin boundary
        tol = 4 * math.ulp(max(abs(x), tau))
        assert 2 * tau * k - tau - tol < x <= 2 * tau * k + tau + tol

    def test_partition_bulk(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1e4, 1e4, 10**6)
        tau = 0.73
        k = bin_index(x, tau)
        assert np.all(x > 2 * tau * k - tau)
        assert np.all(x <= 2 * tau * k + tau)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            bin_index(0.0, 0.0)
        with pytest.raises(ValueError):
            bin_index(float("nan"), 1.0)


class TestStableHistogram:
    def test_threshold_formula_is_respected(self):
        # all released masses must clear t = (2/(eps n)) ln(2/delta) + 1/n
        n, eps, delta = 1000, 1.0, 1e-6
        t = (2 / (eps * n)) * math.log(2 / delta) + 1 / n
        assert t == pytest.approx(0.030017, abs=1e-5)
        data = RngStream(30, 0).generator().standard_normal(n)
        for rep in range(50):
            hist = stable_histogram(data, BinGrid(1.0), eps, delta, RngStream(30, rep + 1))
            assert all(v >= t for v in hist.masses.values())

    def test_single_point_thresholding_rate(self):
        # n=1, eps=1, delta=0.5: t = 2 ln 4 + 1 > 1, release survives only on a
        # Laplace upper-tail event of probability 0.5 exp(-(t-1)/2) = 1/8
        t = 2 * math.log(4) + 1
        assert t == pytest.approx(3.7726, abs=1e-4)
        zeroed = sum(
            not stable_histogram([0.5], BinGrid(1.0), 1.0, 0.5, RngStream(31, rep)).masses
            for rep in range(1000)
        )
        p = 0.875
        sigma = math.sqrt(p * (1 - p) / 1000)
        assert abs(zeroed / 1000 - p) <= 3 * sigma

    def test_center_bin_mass_tracks_normal_cdf(self):
        n, eps, delta = 10**4, 1.0, 1e-8
        target = 0.6827
        hits = 0
        for rep in range(200):
            rng = RngStream(32, rep)
            data = rng.child(0).generator().standard_normal(n)
            hist = stable_histogram(data, BinGrid(1.0), eps, delta, rng.child(1))
            hits += abs(hist.masses.get(0, 0.0) - target) <= 0.02
        assert hits >= 190

    def test_sparsity_and_no_phantom_bins(self):
        for rep in range(1000):
            rng = RngStream(33, rep)
            data = rng.child(0).generator().uniform(-40, 40, 50)
            hist = stable_histogram(data, BinGrid(0.5), 5.0, 0.4, rng.child(1))
            assert len(hist.masses) <= data.size
            occupied = set(np.unique(bin_index(data, 0.5)).tolist())
            assert set(hist.masses) <= occupied

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            stable_histogram([], BinGrid(1.0), 1.0, 0.1, RngStream(0))
        with pytest.raises(ValueError):
            stable_histogram([1.0], BinGrid(1.0), 0.0, 0.1, RngStream(0))
        with pytest.raises(ValueError):
            stable_histogram([1.0], BinGrid(1.0), 1.0, 0.0, RngStream(0))

    def test_json_serialization(self):
        hist = stable_histogram([0.1, 0.2, 4.0], BinGrid(1.0), 1e6, 0.5, RngStream(34, 0))
        obj = json.loads(hist.to_json())
        assert obj["tau"] == 1.0
        assert obj["mode"] == "central-stable"
        ks = [entry[0] for entry in obj["entries"]]
        assert ks == sorted(ks)


class TestRandomizedHistogram:
    def test_index_set(self):
        assert np.array_equal(BinGrid(1.0, 5.0).index_set(), [-2, -1, 0, 1, 2])

    def test_huge_epsilon_recovers_empirical(self):
        data = np.array([0.1, 0.2, 1.9, -2.1, 0.0])
        hist = randomized_histogram(data, BinGrid(1.0, 5.0), 1e6, RngStream(35, 0))
        ks, counts = np.unique(bin_index(data, 1.0), return_counts=True)
        empirical = dict(zip(ks.tolist(), (counts / data.size).tolist()))
        assert len(hist.masses) == 5
        for k, mass in hist.masses.items():
            assert abs(mass - empirical.get(k, 0.0)) <= 1e-3

    def test_debiased_mass_is_unbiased(self):
        data = np.array([0.0, 0.0, 0.0, 2.0, -2.0])
        p_hat_0 = 0.6
        runs = 10**5
        total = 0.0
        for rep in range(runs):
            hist = randomized_histogram(data, BinGrid(1.0, 2.0), 1.0, RngStream(36, rep))
            total += hist.masses[0]
        # per-run variance of the debiased mass, for the MC band
        pi = 1 / (1 + math.exp(-0.5))
        p_tilde = (2 * pi - 1) * p_hat_0 + (1 - pi)
        var = p_tilde * (1 - p_tilde) / data.size / (2 * pi - 1) ** 2
        assert abs(total / runs - p_hat_0) <= 4 * math.sqrt(var / runs)

    @given(st.floats(min_value=0.501, max_value=0.999), st.floats(min_value=0.0, max_value=1.0))
    def test_debias_identity(self, pi, p_hat):
        released = (2 * pi - 1) * p_hat + (1 - pi)
        assert abs((released - (1 - pi)) / (2 * pi - 1) - p_hat) <= 1e-12

    def test_requires_finite_grid(self):
        with pytest.raises(ValueError):
            randomized_histogram([0.0], BinGrid(1.0), 1.0, RngStream(0))


class TestArgmaxTies:
    def test_tie_breaking(self):
        assert _argmax_bin({1: 0.5, -1: 0.5}) == -1
        assert _argmax_bin({2: 0.3, 0: 0.3}) == 0
        assert _argmax_bin({1: 0.5, -1: 0.5, 0: 0.2}) == -1
        assert _argmax_bin({3: 0.9, 0: 0.2}) == 3


class TestProjectionIntervalCentral:
    def test_all_zero_data(self):
        iv = projection_interval_central(np.zeros(10**4), 1.0, 10.0, 0.01, RngStream(40, 0))
        assert iv.midpoint == 0.0
        assert (iv.lo, iv.hi) == (-3.0, 3.0)
        assert not iv.histogram_failed

    def test_failure_path(self):
        saw_failure = False
        for rep in range(20):
            iv = projection_interval_central([0.5], 1.0, 1.0, 0.5, RngStream(41, rep))
            if iv.histogram_failed:
                assert iv.midpoint == 0.0
                assert iv.radius == 3.0
                saw_failure = True
        assert saw_failure

    def test_midpoint_is_bin_center(self):
        tau = 0.37
        for rep in range(50):
            rng = RngStream(42, rep)
            data = rng.child(0).generator().normal(3.0, 1.0, 500)
            iv = projection_interval_central(data, tau, 1.0, 0.01, rng.child(1))
            ratio = iv.midpoint / (2 * tau)
            assert abs(ratio - round(ratio)) <= 1e-9


class TestProjectionIntervalLocal:
    def test_noiseless_limit(self):
        iv = projection_interval_local(np.zeros(100), 1.0, 1e4, 5.0, RngStream(43, 0))
        assert iv.midpoint == 0.0
        assert not iv.histogram_failed

    def test_bin_arithmetic(self):
        iv = projection_interval_local(np.full(100, 4.5), 1.0, 1e6, 5.0, RngStream(44, 0))
        assert iv.midpoint == 4.0
        assert (iv.lo, iv.hi) == (1.0, 7.0)

    def test_midpoint_concentrates(self):
        n = 10**4
        tau = math.sqrt(2 * math.log(2 * n / 0.1))
        hits = 0
        for rep in range(500):
            rng = RngStream(45, rep)
            data = rng.child(0).generator().standard_normal(n)
            iv = projection_interval_local(data, tau, 1.0, 20.0, rng.child(1))
            hits += abs(iv.midpoint) <= 2 * tau
        assert hits >= 475

    def test_rejects_small_bound(self):
        with pytest.raises(ValueError):
            projection_interval_local([0.0], 2.0, 1.0, 1.0, RngStream(0))
