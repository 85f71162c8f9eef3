import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pctmeta.effects import Dataset
from pctmeta.teststat import (
    PercentileQuery,
    centered_coverage,
    normal_cdf,
    signs,
    statistic_unweighted,
    statistic_weighted,
    weight,
)

from .oracles import normal_cdf_mp


@st.composite
def datasets(draw, min_sigma=0.05):
    K = draw(st.integers(1, 15))
    theta = draw(st.lists(st.floats(-5, 5), min_size=K, max_size=K))
    sigma = draw(st.lists(st.floats(min_sigma, 3), min_size=K, max_size=K))
    return Dataset.from_arrays(theta, sigma)


class TestNormalCdf:
    def test_values(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_cdf(math.inf) == 1.0
        assert normal_cdf(-math.inf) == 0.0
        assert normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-15)

    def test_against_mpmath(self):
        for z in (-7.5, -3.3, -1.0, 0.3, 2.5, 6.0):
            assert abs(normal_cdf(z) - normal_cdf_mp(z)) <= 1e-15

    def test_array(self):
        out = normal_cdf(np.array([-1.0, 0.0, 1.0]))
        assert out.shape == (3,)
        assert out[0] + out[2] == pytest.approx(1.0, abs=1e-16)


class TestWeight:
    def test_examples(self):
        assert weight(1.0, 1.0, 1.0) == 0.0
        assert weight(0.0, 0.0, 1.0) == 0.5
        assert weight(0.0, 0.0, 0.0) == 0.0
        assert weight(0.0, 1.0, 1.959964) == pytest.approx(0.475, abs=1e-6)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            weight(0.0, -1.0, 1.0)

    @given(st.floats(-10, 10), st.floats(0, 5), st.floats(-10, 10))
    def test_range(self, th, s, mu):
        assert 0.0 <= weight(th, s, mu) <= 0.5


class TestStatistics:
    def test_weighted_examples(self):
        d = Dataset.from_arrays([2.0, 2.0, 2.0], [1.0, 0.5, 3.0])
        assert statistic_weighted(d, 2.0).value == 0.0
        d = Dataset.from_arrays([-1.0, 0.0, 2.0], [1.0, 1.0, 1.0])
        # Phi(1) - 1/2 + Phi(-2) - 1/2 from the mpmath oracle
        expected = normal_cdf_mp(1.0) - 0.5 + normal_cdf_mp(-2.0) - 0.5
        assert expected == pytest.approx(-0.13590512198327784, abs=1e-15)
        assert statistic_weighted(d, 0.0).value == pytest.approx(expected, abs=1e-15)
        d = Dataset.from_arrays([-1.3, 1.3], [0.7, 0.7])
        assert statistic_weighted(d, 0.0).value == 0.0

    def test_unweighted_examples(self):
        assert statistic_unweighted(Dataset.from_arrays([-1, 0, 2], 1.0), 0.0).value == 0
        assert statistic_unweighted(Dataset.from_arrays([1, 2, 3], 1.0), 0.0).value == -3
        assert statistic_unweighted(Dataset.from_arrays([0.1, 0.4, 0.9, 1.2], 1.0), 0.5).value == 0
        assert statistic_unweighted(Dataset.from_arrays([1, 2], 1.0), 5.0).per_study_weights.tolist() == [1, 1]

    def test_signs_and_weights_returned(self):
        v = statistic_weighted(Dataset.from_arrays([-1.0, 0.0, 2.0], 1.0), 0.0)
        assert v.per_study_signs.tolist() == [1, 0, -1]
        assert v.per_study_weights[1] == 0.0
        assert signs([1.0, 1.0], 1.0).tolist() == [0, 0]

    def test_zero_sigma_step(self):
        d = Dataset.from_arrays([0.0, 1.0, 2.0], 0.0)
        assert statistic_weighted(d, 1.0).value == 0.0
        assert statistic_weighted(d, 1.5).value == 0.5
        assert statistic_weighted(d, -9).value == -1.5

    @given(datasets(), st.floats(-8, 8))
    def test_identity_with_phi(self, d, mu):
        ref = float(np.sum(normal_cdf((mu - d.theta) / d.sigma) - 0.5))
        assert abs(statistic_weighted(d, mu).value - ref) <= 1e-12

    @given(datasets(min_sigma=0.2))
    def test_monotone_and_bounded(self, d):
        lo, hi = d.theta.min(), d.theta.max()
        grid = np.linspace(lo - 1, hi + 1, 101)
        vals = np.array([statistic_weighted(d, m).value for m in grid])
        assert np.all(np.diff(vals) >= 0)
        # strictly increasing wherever some study is off its saturated tail
        live = np.abs((grid[:-1, None] - d.theta) / d.sigma).min(axis=1) < 5
        assert np.all(np.diff(vals)[live] > 0)
        assert np.all(np.abs(vals) <= d.K / 2)

    @given(datasets(), st.floats(-30, 30))
    def test_bounds(self, d, mu):
        assert abs(statistic_weighted(d, mu).value) <= d.K / 2
        assert abs(statistic_unweighted(d, mu).value) <= d.K

    @given(st.data())
    def test_affine_equivariance(self, data):
        # dyadic inputs keep a*x + b exact in floating point
        dy = st.integers(-64, 64).map(lambda i: i / 16)
        K = data.draw(st.integers(1, 12))
        theta = data.draw(st.lists(dy, min_size=K, max_size=K))
        sigma = data.draw(st.lists(st.integers(1, 48).map(lambda i: i / 16), min_size=K, max_size=K))
        d = Dataset.from_arrays(theta, sigma)
        mu = data.draw(dy)
        a, b = 2.0, 3.0
        t = d.affine(a, b)
        assert statistic_weighted(t, a * mu + b).value == pytest.approx(statistic_weighted(d, mu).value, abs=1e-12)
        assert statistic_unweighted(t, a * mu + b).value == statistic_unweighted(d, mu).value

    @pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
    def test_small_sigma_limit(self, eps):
        rng = np.random.default_rng(5)
        theta = np.sort(rng.uniform(-5, 5, 12))
        sigma = rng.uniform(0.5, 2.0, 12)
        mu = 0.5 * (theta[5] + theta[6])
        d = Dataset.from_arrays(theta, eps * sigma)
        gap = np.abs(theta - mu).min()
        # each study's deficit from 1/2 is Phi(-|z|) <= Phi(-gap / (eps max sigma))
        bound = 12 * normal_cdf(-gap / (eps * sigma.max()))
        err = abs(statistic_weighted(d, mu).value - statistic_unweighted(d, mu).value / 2)
        assert err <= bound + 1e-15

    def test_centered_coverage_shape(self):
        out = centered_coverage(np.zeros(4), np.array([0.0, 1.0, 2.0]), np.ones(3))
        assert out.shape == (4, 3)
        assert np.all(out[:, 0] == 0)


class TestQuery:
    def test_validation(self):
        PercentileQuery(0.5, 0.05)
        for p, a in [(0.0, 0.05), (1.0, 0.05), (0.5, 0.0), (0.5, 1.0)]:
            with pytest.raises(ValueError):
                PercentileQuery(p, a)
