"""Unit tests for the noise/signal model catalog"""

from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate
from src.catalog import (
    builtin_noise,
    builtin_signal,
    parse_model_spec,
    describe,
    noise_from_descriptor,
    signal_from_descriptor,
    check_n1_membership,
    check_class_membership,
    class_integral,
    membership_grid,
    validate_noise,
    validate_signal,
    sample_pair,
    ModelCatalogError,
    NOISE_FACTORIES,
    SIGNAL_NAMES,
    SUPPORT_TAIL,
)
from src.models import ModelDescriptor


@pytest.fixture
def tgrid():
    """Frequency grid for N1 checks"""
    return np.linspace(-50.0, 50.0, 2001)


class TestBuiltinNoise:
    """Test builtin_noise"""

    def test_gaussian_parameters(self):
        """Test gaussian(sigma) records s=2, b=sigma^2/2, gamma=0"""
        noise = builtin_noise("gaussian", 2.0)
        assert (noise.smoothness.s, noise.smoothness.b, noise.smoothness.gamma) == (2.0, 2.0, 0.0)

    def test_laplace_parameters(self):
        """Test laplace records s=0, b=0, gamma=2 and its cf"""
        noise = builtin_noise("laplace", 1.0)
        assert (noise.smoothness.s, noise.smoothness.b, noise.smoothness.gamma) == (0.0, 0.0, 2.0)
        assert noise.cf(np.array([1.0]))[0] == pytest.approx(0.5)

    def test_cauchy_parameters(self):
        """Test cauchy(sigma) records s=1, b=sigma"""
        noise = builtin_noise("cauchy", 0.5)
        assert (noise.smoothness.s, noise.smoothness.b) == (1.0, 0.5)
        assert noise.cf(np.array([2.0]))[0] == pytest.approx(np.exp(-1.0))

    def test_identity_is_test_only(self):
        """Test identity noise: cf = 1, zero draws, no density"""
        noise = builtin_noise("identity", 123.0)
        assert noise.test_only
        assert noise.density is None
        assert np.all(noise.cf(np.linspace(-5, 5, 11)) == 1.0)
        assert np.all(noise.sample(10, seed=1) == 0.0)

    def test_unknown_name(self):
        """Test unknown noise names are rejected"""
        with pytest.raises(ModelCatalogError) as exc_info:
            builtin_noise("uniform", 1.0)
        assert "Unknown noise" in str(exc_info.value)

    def test_nonpositive_scale(self):
        """Test nonpositive scale is rejected"""
        with pytest.raises(ModelCatalogError):
            builtin_noise("gaussian", 0.0)

    @pytest.mark.parametrize("name", list(NOISE_FACTORIES))
    def test_cf_invariants(self, name, tgrid):
        """Test cf(0)=1, |cf|<=1, Hermitian symmetry and no zeros"""
        assert validate_noise(builtin_noise(name, 1.3), tgrid)


class TestBuiltinSignal:
    """Test builtin_signal"""

    def test_gaussian_class(self):
        """Test gaussian(1) records (r, a) = (2, 0.5)"""
        signal = builtin_signal("gaussian", 1.0)
        assert (signal.smoothness.r, signal.smoothness.a) == (2.0, 0.5)
        assert signal.smoothness.delta == 0.0

    def test_cauchy_cf(self):
        """Test cauchy(1).cf(2) = e^-2"""
        signal = builtin_signal("cauchy", 1.0)
        assert signal.cf(np.array([2.0]))[0] == pytest.approx(np.exp(-2.0))

    def test_laplace_peak(self):
        """Test laplace(1).density(0) = 0.5 and delta = 1.49"""
        signal = builtin_signal("laplace", 1.0)
        assert signal.density(np.array([0.0]))[0] == pytest.approx(0.5)
        assert signal.smoothness.delta == pytest.approx(1.49)

    def test_mixture_matches_component_class(self):
        """Test gaussian_mixture carries its components' (r, a)"""
        signal = builtin_signal("gaussian_mixture", 0.5)
        assert (signal.smoothness.r, signal.smoothness.a) == (2.0, 0.125)

    def test_unknown_name(self):
        """Test unknown signal names are rejected"""
        with pytest.raises(ModelCatalogError):
            builtin_signal("beta", 1.0)

    def test_nonpositive_scale(self):
        """Test nonpositive scale is rejected"""
        with pytest.raises(ModelCatalogError):
            builtin_signal("laplace", -1.0)

    @pytest.mark.parametrize("name", SIGNAL_NAMES)
    def test_density_valid(self, name):
        """Test nonnegative density with mass in [1-1e-4, 1] over the support hint"""
        assert validate_signal(builtin_signal(name, 1.0))

    @pytest.mark.parametrize("name", SIGNAL_NAMES)
    def test_cdf_matches_density(self, name):
        """Test the cdf increment over [-1, 2] equals the density integral"""
        signal = builtin_signal(name, 1.5)
        expected, _ = integrate.quad(signal.density, -1.0, 2.0, points=[0.0])
        bounds = signal.cdf(np.array([-1.0, 2.0]))
        assert bounds[1] - bounds[0] == pytest.approx(expected, abs=1e-10)
        assert signal.cdf(np.array([0.0]))[0] == pytest.approx(0.5)

    def test_cauchy_mass_over_hint(self):
        """Test cauchy leaves exactly SUPPORT_TAIL outside its hint"""
        signal = builtin_signal("cauchy", 1.0)
        lo, hi = signal.support_hint
        bounds = signal.cdf(np.array([lo, hi]))
        assert 1.0 - (bounds[1] - bounds[0]) == pytest.approx(SUPPORT_TAIL, rel=1e-6)

    @pytest.mark.parametrize("name", SIGNAL_NAMES)
    def test_window_inside_hint(self, name):
        """Test the window is nested in the support hint and keeps g^2 tails below 1e-7"""
        signal = builtin_signal(name, 1.0)
        lo, hi = signal.window
        assert signal.support_hint[0] <= lo < hi <= signal.support_hint[1]
        outside, _ = integrate.quad(lambda x: float(signal.density(x)) ** 2, hi, np.inf)
        assert 2 * outside < 1e-7

    def test_density_not_matching_cdf(self):
        """Test a rescaled density is rejected"""
        signal = builtin_signal("cauchy", 1.0)
        doubled = replace(signal, density=lambda x: 2.0 * signal.density(x))
        assert not validate_signal(doubled)

    @pytest.mark.parametrize("name", SIGNAL_NAMES)
    def test_recorded_radius_admits_model(self, name):
        """Test every builtin signal passes its own class check"""
        signal = builtin_signal(name, 1.0)
        assert check_class_membership(signal, membership_grid(signal)).ok


class TestN1Membership:
    """Test check_n1_membership"""

    def test_gaussian_exact_envelope(self):
        """Test gaussian(1): cf equals the envelope"""
        report = check_n1_membership(builtin_noise("gaussian", 1.0), np.linspace(-10, 10, 1001))
        assert report.ok
        assert report.worst_ratio_low == pytest.approx(1.0)
        assert report.worst_ratio_high == pytest.approx(1.0)

    def test_identity(self):
        """Test identity noise with a flat envelope"""
        assert check_n1_membership(builtin_noise("identity", 1.0), np.linspace(-10, 10, 101)).ok

    def test_laplace_wrong_gamma(self, tgrid):
        """Test laplace(1) declared with gamma=1 fails"""
        noise = builtin_noise("laplace", 1.0)
        wrong = replace(noise, smoothness=noise.smoothness.model_copy(update={"gamma": 1.0}))
        report = check_n1_membership(wrong, tgrid)
        assert not report.ok
        assert report.worst_ratio_low < 0.1

    @pytest.mark.parametrize("name", list(NOISE_FACTORIES))
    @pytest.mark.parametrize("scale", [0.5, 1.0, 2.0])
    def test_builtins_pass(self, name, scale, tgrid):
        """Test every builtin noise passes with its recorded parameters"""
        assert check_n1_membership(builtin_noise(name, scale), tgrid).ok

    def test_empty_grid(self):
        """Test an empty grid is refused"""
        with pytest.raises(ValueError):
            check_n1_membership(builtin_noise("gaussian", 1.0), np.array([]))


class TestClassMembership:
    """Test check_class_membership"""

    def test_laplace_inside(self):
        """Test laplace signal with delta = 1.49 and L = 100"""
        signal = builtin_signal("laplace", 1.0)
        signal = replace(signal, smoothness=signal.smoothness.model_copy(update={"L": 100.0}))
        assert check_class_membership(signal, membership_grid(signal)).ok

    def test_laplace_delta_two_diverges(self):
        """Test delta = 2 grows with the grid and fails the recorded L"""
        signal = builtin_signal("laplace", 1.0)
        outside = replace(signal, smoothness=signal.smoothness.model_copy(update={"delta": 2.0}))
        small = class_integral(outside, np.linspace(-100, 100, 20001))
        large = class_integral(outside, np.linspace(-200, 200, 40001))
        assert large > 1.9 * small
        assert not check_class_membership(outside, membership_grid(signal)).ok

    def test_gaussian_quarter_scale(self):
        """Test gaussian with a = 0.25 integrates to sqrt(2 pi)"""
        signal = builtin_signal("gaussian", 1.0)
        inside = replace(signal, smoothness=signal.smoothness.model_copy(update={"a": 0.25}))
        report = check_class_membership(inside, np.linspace(-40, 40, 80001))
        assert report.ok
        assert report.integral_estimate == pytest.approx(np.sqrt(2 * np.pi), rel=1e-6)


class TestDescriptors:
    """Test name:scale parsing and JSON descriptors"""

    def test_parse_with_scale(self):
        """Test name:scale"""
        assert parse_model_spec("gaussian:0.5") == ("gaussian", 0.5)

    def test_parse_bare_name(self):
        """Test bare name means scale 1"""
        assert parse_model_spec("Laplace") == ("laplace", 1.0)

    def test_parse_bad_scale(self):
        """Test a non-numeric scale is rejected"""
        with pytest.raises(ModelCatalogError):
            parse_model_spec("gaussian:wide")

    def test_describe_noise_keys(self):
        """Test noise descriptor field names"""
        doc = describe(builtin_noise("cauchy", 1.0))
        assert doc["name"] == "cauchy"
        assert set(doc["smoothness"]) == {"gamma", "s", "b", "k0", "k1"}

    def test_descriptor_round_trip(self):
        """Test a described signal rebuilds with the same class"""
        signal = builtin_signal("gaussian_mixture", 1.0)
        rebuilt = signal_from_descriptor(ModelDescriptor(**describe(signal)))
        assert rebuilt.smoothness == signal.smoothness

    def test_descriptor_override(self):
        """Test recorded parameters in a document override the catalog"""
        doc = ModelDescriptor(name="laplace", scale=1.0, smoothness={"k1": 2.0})
        assert noise_from_descriptor(doc).smoothness.k1 == 2.0


class TestSamplePair:
    """Test sample_pair"""

    def test_identity_noise(self):
        """Test Y = X exactly under identity noise"""
        pair = sample_pair(builtin_signal("gaussian", 1.0), builtin_noise("identity", 1.0), 100, seed=3)
        assert np.array_equal(pair.Y, pair.X)

    def test_deterministic(self):
        """Test the same seed gives the same Y"""
        signal, noise = builtin_signal("laplace", 1.0), builtin_noise("gaussian", 1.0)
        first = sample_pair(signal, noise, 500, seed=42)
        second = sample_pair(signal, noise, 500, seed=42)
        assert np.array_equal(first.Y, second.Y)

    def test_prefix_stable(self):
        """Test a larger n extends the same draws"""
        signal, noise = builtin_signal("gaussian_mixture", 1.0), builtin_noise("laplace", 1.0)
        short = sample_pair(signal, noise, 100, seed=9)
        long = sample_pair(signal, noise, 1000, seed=9)
        assert np.array_equal(long.Y[:100], short.Y)

    def test_entropy_tuple_seed(self):
        """Test (seed, n, rep) tuples give independent streams"""
        signal, noise = builtin_signal("gaussian", 1.0), builtin_noise("gaussian", 1.0)
        a = sample_pair(signal, noise, 50, seed=(1, 50, 0)).Y
        b = sample_pair(signal, noise, 50, seed=(1, 50, 1)).Y
        assert not np.array_equal(a, b)

    def test_variance_of_sum(self):
        """Test var(Y) = var(X) + var(eps) = 2 for gaussian(1) + gaussian(1)"""
        pair = sample_pair(builtin_signal("gaussian", 1.0), builtin_noise("gaussian", 1.0), 100_000, seed=0)
        assert abs(pair.Y.var() - 2.0) < 0.1

    @pytest.mark.parametrize("signal_name,noise_name,variance", [
        ("gaussian", "laplace", 1.0 + 2.0),
        ("laplace", "gaussian", 2.0 + 1.0),
        ("gaussian_mixture", "identity", 1.0 + 4.0),
    ])
    def test_moments(self, signal_name, noise_name, variance):
        """Test mean and variance of Y within 4 standard errors"""
        n = 20_000
        pair = sample_pair(builtin_signal(signal_name, 1.0), builtin_noise(noise_name, 1.0), n, seed=5)
        assert abs(pair.Y.mean()) < 4 * np.sqrt(variance / n)
        # fourth moments stay below 10 var^2 for these models
        assert abs(pair.Y.var() - variance) < 4 * np.sqrt(10 * variance ** 2 / n)

    def test_zero_n_rejected(self):
        """Test n = 0 is refused"""
        with pytest.raises(ModelCatalogError):
            sample_pair(builtin_signal("gaussian", 1.0), builtin_noise("gaussian", 1.0), 0, seed=0)
