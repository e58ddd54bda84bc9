"""KDE bandwidth rules and log-density evaluation against a naive oracle."""

import math

import numpy as np
import pytest

from roundtrip import kde
from roundtrip.rng import stream


def naive_kde_log_density(model, x):
    """Double-loop product-kernel sum in the linear domain; the oracle."""
    total = 0.0
    for t in model.train_points:
        prod = 1.0
        for xj, tj, hj in zip(x, t, model.bandwidths):
            prod *= math.exp(-0.5 * ((xj - tj) / hj) ** 2) / (hj * math.sqrt(2 * math.pi))
        total += prod
    return math.log(total / len(model.train_points))


class TestBandwidthRules:
    def test_scott_1d_formula(self):
        # construct data with sample sd exactly 1
        base = np.array([-1.0, 1.0] * 50)
        x = (base / base.std(ddof=1))[:, None]
        model = kde.fit_kde(x, "scott")
        assert model.bandwidths[0] == pytest.approx(100 ** (-1 / 5), rel=1e-12)

    def test_silverman_1d_formula(self):
        base = np.array([-1.0, 1.0] * 50)
        x = (base / base.std(ddof=1))[:, None]
        model = kde.fit_kde(x, "silverman")
        assert model.bandwidths[0] == pytest.approx(75 ** (-1 / 5), rel=1e-12)

    def test_multivariate_factors(self):
        assert kde.scott_factor(500, 3) == pytest.approx(500 ** (-1 / 7), rel=1e-12)
        assert kde.silverman_factor(500, 3) == pytest.approx((500 * 5 / 4) ** (-1 / 7), rel=1e-12)

    def test_scale_equivariance(self):
        x = stream(1, "kde").standard_normal((80, 2))
        h1 = kde.fit_kde(x, "scott").bandwidths
        h2 = kde.fit_kde(2.0 * x, "scott").bandwidths
        np.testing.assert_allclose(h2, 2.0 * h1, rtol=1e-12)

    def test_constant_dimension_rejected(self):
        x = np.column_stack([np.ones(10), np.arange(10.0)])
        with pytest.raises(ValueError, match="constant"):
            kde.fit_kde(x, "scott")

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            kde.fit_kde(np.zeros((1, 2)), "scott")

    def test_fixed_bandwidths(self):
        x = stream(2, "kde").standard_normal((30, 2))
        model = kde.fit_kde(x, kde.RULE_FIXED, fixed_bandwidths=[0.3, 0.7])
        np.testing.assert_array_equal(model.bandwidths, [0.3, 0.7])

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError):
            kde.fit_kde(np.zeros((5, 1)) + np.arange(5)[:, None], "epanechnikov")


class TestLogDensity:
    def test_single_kernel_at_center(self):
        model = kde.KdeModel(np.array([[0.0], [0.0]]), np.array([1.0]), "fixed")
        val = kde.kde_log_density(model, [0.0])
        assert val == pytest.approx(math.log(1 / math.sqrt(2 * math.pi)), rel=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_naive_sum(self, d):
        rng = stream(d, "kde-naive")
        x = rng.standard_normal((200, d))
        model = kde.fit_kde(x, "silverman")
        queries = rng.standard_normal((20, d)) * 2
        fast = kde.kde_log_density(model, queries)
        for i, q in enumerate(queries):
            assert abs(fast[i] - naive_kde_log_density(model, q)) < 1e-10

    def test_integrates_to_one_1d(self):
        rng = stream(5, "kde-int")
        x = rng.standard_normal((100, 1))
        model = kde.fit_kde(x, "scott")
        grid = np.linspace(-12, 12, 20_001)[:, None]
        mass = np.trapezoid(np.exp(kde.kde_log_density(model, grid)), grid[:, 0])
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_translation_equivariance(self):
        rng = stream(6, "kde-shift")
        x = rng.standard_normal((50, 2))
        q = rng.standard_normal((10, 2))
        shift = np.array([3.5, -1.25])
        a = kde.kde_log_density(kde.fit_kde(x, "scott"), q)
        b = kde.kde_log_density(kde.fit_kde(x + shift, "scott"), q + shift)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_density_peaks_near_sample_mean(self):
        rng = stream(7, "kde-peak")
        x = rng.standard_normal((400, 2)) * 0.5 + np.array([1.0, -2.0])
        model = kde.fit_kde(x, "silverman")
        grid = np.linspace(-4, 4, 41)
        g1, g2 = np.meshgrid(grid + 1.0, grid - 2.0, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
        dens = kde.kde_log_density(model, pts)
        best = pts[np.argmax(dens)]
        assert np.linalg.norm(best - x.mean(axis=0)) < 0.5

    def test_query_dim_mismatch(self):
        model = kde.fit_kde(stream(8, "kde").standard_normal((10, 2)), "scott")
        with pytest.raises(ValueError):
            kde.kde_log_density(model, [0.0, 0.0, 0.0])
