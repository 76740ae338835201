import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from fedsel.errors import BudgetExhaustedError, InvalidArgumentError
from fedsel.privacy import (
    NoiseScale,
    PrivacyBudget,
    add_gaussian_noise,
    calibrate_sigma,
    clip_update,
    sequential_budget,
)
from fedsel.rngstream import NOISE, rng_for
from fedsel.training import Gradient


class TestCalibrateSigma:
    def test_reference_value(self):
        # sqrt(2 ln(1.25e5)) evaluated independently.
        scale = calibrate_sigma(PrivacyBudget(1.0, 1e-5), sensitivity=1.0)
        assert scale.sigma == pytest.approx(4.844805262605389, abs=1e-9)

    def test_linear_in_sensitivity(self):
        budget = PrivacyBudget(2.0, 1e-6)
        assert calibrate_sigma(budget, 2.0).sigma == pytest.approx(
            2 * calibrate_sigma(budget, 1.0).sigma
        )

    def test_inverse_in_epsilon(self):
        assert calibrate_sigma(PrivacyBudget(2.0, 1e-5), 1.0).sigma == pytest.approx(
            calibrate_sigma(PrivacyBudget(1.0, 1e-5), 1.0).sigma / 2
        )

    @pytest.mark.parametrize("eps,delta", [(-1.0, 1e-5), (0.0, 1e-5), (1.0, 1.0), (1.0, 0.0)])
    def test_invalid_budget(self, eps, delta):
        with pytest.raises(InvalidArgumentError):
            PrivacyBudget(eps, delta)


class TestClipUpdate:
    def test_within_norm_unchanged(self):
        g = Gradient(np.array([0.3, 0.4]))
        assert clip_update(g, 1.0) is g

    def test_scaled_down(self):
        clipped = clip_update(Gradient(np.array([6.0, 8.0])), 1.0)
        np.testing.assert_allclose(clipped.values, [0.6, 0.8])

    def test_zero_vector(self):
        clipped = clip_update(Gradient(np.zeros(3)), 0.5)
        np.testing.assert_array_equal(clipped.values, np.zeros(3))

    @given(
        arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)),
        st.floats(1e-3, 1e3),
    )
    def test_post_clip_norm_bounded(self, values, clip_norm):
        clipped = clip_update(Gradient(values), clip_norm)
        assert clipped.norm() <= clip_norm * (1 + 1e-12)


class TestAddGaussianNoise:
    def test_zero_sigma_identity(self):
        g = Gradient(np.array([1.0, 2.0]))
        out = add_gaussian_noise(g, NoiseScale(sigma=0.0, clip_norm=1.0), rng_seed=1)
        np.testing.assert_array_equal(out.values, g.values)

    def test_deterministic_per_seed(self):
        g = Gradient(np.arange(5, dtype=np.float64))
        scale = NoiseScale(sigma=1.5, clip_norm=1.0)
        a = add_gaussian_noise(g, scale, rng_seed=9)
        b = add_gaussian_noise(g, scale, rng_seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_noise_moments(self):
        n = 10**5
        sigma = 2.0
        g = Gradient(np.zeros(n))
        out = add_gaussian_noise(g, NoiseScale(sigma=sigma, clip_norm=1.0), rng_seed=4)
        noise = out.values
        assert abs(noise.mean()) <= 3 * sigma / np.sqrt(n)
        assert abs(noise.var() - sigma**2) <= 0.02 * sigma**2

    def test_distribution_ks(self):
        sigma = 0.7
        g = Gradient(np.zeros(10**4))
        out = add_gaussian_noise(g, NoiseScale(sigma=sigma, clip_norm=1.0), rng_seed=2)
        _, p = sps.kstest(out.values, "norm", args=(0.0, sigma))
        assert p > 0.01

    def test_stream_stability_under_slicing(self):
        # The first k noise coordinates equal the first k draws of the stream,
        # so noising then slicing matches slicing the stream positions.
        seed = 31
        sigma = 1.0
        full = add_gaussian_noise(
            Gradient(np.zeros(10)), NoiseScale(sigma, 1.0), rng_seed=seed
        ).values
        direct = rng_for(seed, NOISE).standard_normal(4) * sigma
        np.testing.assert_array_equal(full[:4], direct)


class TestSequentialBudget:
    def test_single_round_identity(self):
        out = sequential_budget(PrivacyBudget(0.1, 1e-6), 1)
        assert out.epsilon == pytest.approx(0.1)
        assert out.delta == pytest.approx(1e-6)

    def test_additivity(self):
        out = sequential_budget(PrivacyBudget(0.1, 1e-6), 10)
        assert out.epsilon == pytest.approx(1.0)
        assert out.delta == pytest.approx(1e-5)

    def test_exhaustion(self):
        with pytest.raises(BudgetExhaustedError):
            sequential_budget(PrivacyBudget(0.1, 0.2), 5)

    def test_rounds_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            sequential_budget(PrivacyBudget(0.1, 1e-6), 0)
