"""Unit tests for risk bounds, regimes, coefficient recursions and bandwidths"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError
from src.models import ProblemParams, RegimeCell, BandwidthKind
from src.rates import (
    Regime,
    NoAsymptoticFormulaError,
    alpha,
    risk_bound,
    log_risk_bound,
    risk_bound_projection,
    projection_resolution,
    as_rational,
    interval_index,
    binomial,
    expansion_term,
    power_series_terms,
    recursion_weights,
    recursion_terms,
    bias_scale,
    variance_scale,
    coeffs_bias_dominant,
    coeffs_variance_dominant,
    regime_cell,
    classify_regime,
    has_asymptotic_formula,
    asymptotic_bandwidth,
    numeric_bandwidth,
    grid_scan_bandwidth,
    optimal_bandwidth,
    verify_equation_residual,
    theoretical_rate,
    log_theoretical_rate,
    rate_power_exponent,
    rate_log_factor,
)


@pytest.fixture
def gauss_gauss():
    """gaussian(1) signal, gaussian(1) noise: the Equal cell with a = b"""
    return ProblemParams.from_values(delta=0.0, r=2.0, a=0.5, gamma=0.0, b=0.5, s=2.0)


@pytest.fixture
def laplace_laplace():
    """laplace(1) signal, laplace(1) noise: both ordinary smooth"""
    return ProblemParams.from_values(delta=1.49, r=0.0, a=0.0, gamma=2.0, b=0.0, s=0.0)


@pytest.fixture
def bias_dominant():
    """r = 1 < s = 2, lambda = 1/2"""
    return ProblemParams.from_values(delta=0.0, r=1.0, a=1.0, gamma=0.0, b=0.5, s=2.0)


unit_fractions = st.builds(
    Fraction,
    st.integers(min_value=1, max_value=40),
    st.integers(min_value=2, max_value=41)
).filter(lambda q: 0 < q < 1)


class TestRiskBound:
    """Test risk_bound and its log form"""

    def test_mise_two_terms(self, gauss_gauss):
        """Test MISE = exp(-1/h^2) + h exp(1/h^2) / n for the gaussian pair"""
        h, n = 0.6, 1000.0
        expected = math.exp(-1 / h ** 2) + h * math.exp(1 / h ** 2) / n
        assert risk_bound(h, n, gauss_gauss) == pytest.approx(expected, rel=1e-12)

    def test_mse_variance_factor(self, laplace_laplace):
        """Test the MSE variance carries min(1, h^{s-1}) h^{s-1-2gamma}"""
        params = laplace_laplace.with_risk("mse")
        h, n = 0.5, 100.0
        expected = h ** (2 * 1.49 - 1) + min(1.0, h ** -1) * h ** (-1 - 4) / n
        assert risk_bound(h, n, params) == pytest.approx(expected, rel=1e-12)

    def test_vectorized_log(self, gauss_gauss):
        """Test log_risk_bound agrees with risk_bound elementwise"""
        hs = np.array([0.3, 0.5, 1.0, 2.0])
        logs = log_risk_bound(hs, 1e4, gauss_gauss)
        np.testing.assert_allclose(np.exp(logs), [risk_bound(h, 1e4, gauss_gauss) for h in hs], rtol=1e-12)

    def test_invalid_inputs(self, gauss_gauss):
        """Test h <= 0 and n < 1 are refused"""
        with pytest.raises(ValueError):
            risk_bound(0.0, 100, gauss_gauss)
        with pytest.raises(ValueError):
            risk_bound(0.5, 0.5, gauss_gauss)

    def test_projection_bound(self, laplace_laplace):
        """Test the projection MISE order at L_m = 1/(pi h)"""
        L_m = projection_resolution(0.5)
        assert L_m == pytest.approx(1 / (math.pi * 0.5))
        expected = L_m ** (-2 * 1.49) + L_m ** 5 / 100.0
        assert risk_bound_projection(L_m, 100.0, laplace_laplace) == pytest.approx(expected, rel=1e-12)

    def test_alpha(self, gauss_gauss):
        """Test alpha = r - 2delta - 2gamma - 1 for MISE"""
        assert alpha(gauss_gauss) == 1.0
        assert alpha(gauss_gauss.with_risk("mse")) == 1.0


class TestIntervalIndex:
    """Test interval_index"""

    @pytest.mark.parametrize("lam,k", [
        (Fraction(1, 2), 0),
        (Fraction(2, 3), 1),
        (Fraction(3, 4), 2),
        (0.5, 0),
        (0.3, 0),
        (0.7, 2),
        (0.5 + 1e-9, 1),
    ])
    def test_known_values(self, lam, k):
        """Test boundaries belong to the lower interval"""
        assert interval_index(lam) == k

    def test_out_of_range(self):
        """Test ratios outside (0, 1) are refused"""
        with pytest.raises(ValueError):
            interval_index(1.0)

    @given(unit_fractions)
    def test_interval_property(self, lam):
        """Test k/(k+1) < lambda <= (k+1)/(k+2)"""
        k = interval_index(lam)
        assert Fraction(k, k + 1) < lam <= Fraction(k + 1, k + 2)

    def test_as_rational(self):
        """Test small-denominator floats become fractions and irrationals stay floats"""
        assert as_rational(0.5) == Fraction(1, 2)
        assert isinstance(as_rational(math.sqrt(0.5)), float)


class TestRecursion:
    """Test coefficient recursions"""

    def test_binomial(self):
        """Test generalized binomial coefficients"""
        assert binomial(Fraction(1, 2), 2) == Fraction(-1, 8)
        assert binomial(3.0, 2) == 3.0

    def test_first_weights(self):
        """Test w_0 = -1, w_1 = lambda, w_2 = -(3 lambda^2 - lambda)/2"""
        lam = Fraction(3, 5)
        assert recursion_weights(lam, 2) == [-1, lam, -(3 * lam ** 2 - lam) / 2]

    def test_leading_coefficient(self):
        """Test b_0 = -2a/(2b)^lambda"""
        coeffs = coeffs_bias_dominant(0.5, a=1.0, b=0.5, k=0)
        assert coeffs == [-2.0]
        assert bias_scale(0.5, 1.0, 0.5) == 2.0

    def test_variance_mirror(self):
        """Test d_0 = -2b/(2a)^mu"""
        coeffs = coeffs_variance_dominant(0.5, a=2.0, b=1.0, k=0)
        assert coeffs[0] == pytest.approx(-variance_scale(0.5, 2.0, 1.0))
        assert coeffs[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("lam", [0.4, 0.6, 0.75, 0.8])
    def test_recursion_terms_vanish(self, lam):
        """Test M_0..M_k = 0 for the computed coefficients"""
        k = interval_index(lam)
        coeffs = coeffs_bias_dominant(lam, a=0.7, b=1.3, k=k)
        terms = recursion_terms(coeffs, lam, bias_scale(lam, 0.7, 1.3), k)
        np.testing.assert_allclose(terms, 0.0, atol=1e-12)

    @given(
        unit_fractions,
        st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=7), min_size=1, max_size=3),
        st.integers(min_value=1, max_value=5)
    )
    @settings(max_examples=60, deadline=None)
    def test_power_series_matches_enumeration(self, lam, coeffs, order):
        """Test the power-series recurrence equals the composition sum exactly"""
        series = power_series_terms(coeffs, lam, order)
        for i in range(1, order + 1):
            assert series[i] == expansion_term(coeffs, lam, i)

    def test_invalid_ratio(self):
        """Test lambda outside (0, 1) and b <= 0 are refused"""
        with pytest.raises(ValueError):
            coeffs_bias_dominant(1.2, a=1.0, b=1.0, k=0)
        with pytest.raises(ValueError):
            coeffs_bias_dominant(0.5, a=1.0, b=0.0, k=0)
        with pytest.raises(ValueError):
            coeffs_variance_dominant(0.5, a=0.0, b=1.0, k=0)


class TestRegimes:
    """Test regime classification"""

    @pytest.mark.parametrize("r,s,cell", [
        (0.0, 0.0, RegimeCell.ORD_ORD),
        (0.0, 1.0, RegimeCell.ORD_SUPER),
        (2.0, 0.0, RegimeCell.SUPER_ORD),
        (2.0, 2.0, RegimeCell.EQUAL),
        (1.0, 2.0, RegimeCell.BIAS_DOMINANT),
        (2.0, 1.0, RegimeCell.VARIANCE_DOMINANT),
    ])
    def test_cells(self, r, s, cell):
        """Test each cell of the (r, s) partition"""
        assert regime_cell(r, s) == cell

    @pytest.mark.parametrize("values,cell,has_formula", [
        ((1.49, 0.0, 0.0, 2.0, 0.0, 0.0), RegimeCell.ORD_ORD, False),
        ((1.0, 0.0, 0.0, 0.0, 0.5, 2.0), RegimeCell.ORD_SUPER, True),
        ((0.0, 2.0, 0.5, 2.0, 0.0, 0.0), RegimeCell.SUPER_ORD, True),
        ((0.0, 2.0, 0.5, 0.0, 0.5, 2.0), RegimeCell.EQUAL, True),
        ((0.0, 1.0, 1.0, 0.0, 0.5, 2.0), RegimeCell.BIAS_DOMINANT, True),
        ((0.0, 2.0, 0.5, 0.0, 1.0, 1.0), RegimeCell.VARIANCE_DOMINANT, True),
    ])
    def test_asymptotic_formula_table(self, values, cell, has_formula):
        """Test only the ordinary/ordinary cell lacks a closed-form bandwidth"""
        regime = classify_regime(ProblemParams.from_values(*values))
        assert (regime.cell, has_asymptotic_formula(regime)) == (cell, has_formula)

    @given(
        st.one_of(st.just(0.0), st.floats(min_value=0.01, max_value=5)),
        st.one_of(st.just(0.0), st.floats(min_value=0.01, max_value=5))
    )
    def test_partition(self, r, s):
        """Test the cell agrees with the defining predicates"""
        cell = regime_cell(r, s)
        predicates = {
            RegimeCell.ORD_ORD: r == 0 and s == 0,
            RegimeCell.ORD_SUPER: r == 0 and s > 0,
            RegimeCell.SUPER_ORD: r > 0 and s == 0,
            RegimeCell.EQUAL: r > 0 and r == s,
            RegimeCell.BIAS_DOMINANT: 0 < r < s,
            RegimeCell.VARIANCE_DOMINANT: r > s > 0,
        }
        assert [c for c, holds in predicates.items() if holds] == [cell]

    def test_equal_log_exponent(self, gauss_gauss):
        """Test xi = (2 delta b + (s - 2gamma - 1) a) / ((a + b) s)"""
        regime = classify_regime(gauss_gauss)
        assert regime.cell == RegimeCell.EQUAL
        assert regime.xi == pytest.approx(0.25)

    def test_bias_dominant_coefficients(self, bias_dominant):
        """Test lambda = 1/2 gives k = 0 and b_0 = -2"""
        regime = classify_regime(bias_dominant)
        assert (regime.cell, regime.k, regime.lambda_or_mu) == (RegimeCell.BIAS_DOMINANT, 0, 0.5)
        assert regime.coeffs == [pytest.approx(-2.0)]

    def test_zero_scale_is_ordinary(self):
        """Test r > 0 with a = 0 is treated as ordinary smooth"""
        params = ProblemParams.from_values(delta=1.0, r=2.0, a=0.0, gamma=1.0, b=0.0, s=0.0)
        assert classify_regime(params).cell == RegimeCell.ORD_ORD

    def test_regime_needs_coefficients(self):
        """Test unequal supersmooth cells carry k + 1 coefficients"""
        with pytest.raises(ValidationError):
            Regime(cell=RegimeCell.BIAS_DOMINANT, r=1.0, s=2.0)
        with pytest.raises(ValidationError):
            Regime(cell=RegimeCell.EQUAL, r=2.0, s=2.0, coeffs=[1.0])


class TestBandwidth:
    """Test asymptotic and numeric bandwidths"""

    def test_bias_dominant_formula(self, bias_dominant):
        """Test h* = (2b)^{1/s} (ln n - 2 sqrt(ln n))^{-1/2} when alpha = 0"""
        n = 1e8
        log_n = math.log(n)
        expected = (log_n - 2 * math.sqrt(log_n)) ** -0.5
        assert asymptotic_bandwidth(n, bias_dominant) == pytest.approx(expected, rel=1e-12)

    def test_truncated_vector(self, bias_dominant):
        """Test an empty coefficient override drops the correction"""
        n = 1e8
        assert asymptotic_bandwidth(n, bias_dominant, coeffs=[]) == pytest.approx(math.log(n) ** -0.5)

    def test_ordinary_has_no_formula(self, laplace_laplace):
        """Test the ordinary/ordinary cell raises"""
        with pytest.raises(NoAsymptoticFormulaError):
            asymptotic_bandwidth(1e4, laplace_laplace)

    def test_asymptotic_falls_back(self, laplace_laplace):
        """Test optimal_bandwidth uses the minimizer when no formula exists"""
        asymptotic = optimal_bandwidth(1e4, laplace_laplace, BandwidthKind.ASYMPTOTIC)
        assert asymptotic == pytest.approx(numeric_bandwidth(1e4, laplace_laplace))

    def test_small_n(self, gauss_gauss):
        """Test n < 3 is refused"""
        with pytest.raises(ValueError):
            asymptotic_bandwidth(2, gauss_gauss)

    @pytest.mark.parametrize("n", [1e4, 1e8])
    def test_numeric_matches_scan(self, gauss_gauss, n):
        """Test golden-section refinement agrees with an exhaustive scan within 1%"""
        refined = numeric_bandwidth(n, gauss_gauss)
        scanned = grid_scan_bandwidth(n, gauss_gauss)
        assert abs(refined / scanned - 1) < 0.01

    def test_numeric_ordinary_power_law(self, laplace_laplace):
        """Test the ordinary/ordinary minimizer scales like n^{-1/(2delta+2gamma+1)}"""
        h1 = numeric_bandwidth(1e4, laplace_laplace)
        h2 = numeric_bandwidth(1e6, laplace_laplace)
        slope = math.log(h2 / h1) / math.log(100.0)
        assert slope == pytest.approx(-1 / (2 * 1.49 + 4 + 1), rel=1e-3)

    def test_numeric_noise_free_slope(self):
        """Test with identity-noise parameters and delta = 1 the minimizer slope is -1/3"""
        params = ProblemParams.from_values(delta=1.0, r=0.0, a=0.0, gamma=0.0, b=0.0, s=0.0, test_only=True)
        n = np.logspace(3, 7, 9)
        h = [numeric_bandwidth(m, params) for m in n]
        slope = np.polyfit(np.log(n), np.log(h), 1)[0]
        assert slope == pytest.approx(-1 / 3, abs=0.02)

    @pytest.mark.parametrize("fixture", ["laplace_laplace", "gauss_gauss"])
    def test_risk_at_optimum_tracks_rate(self, fixture, request):
        """Test risk_bound(h*) / theoretical_rate stays within a factor 50 for n in 1e3..1e7"""
        params = request.getfixturevalue(fixture)
        for n in np.logspace(3, 7, 5):
            ratio = risk_bound(numeric_bandwidth(n, params), n, params) / theoretical_rate(n, params)
            assert 1 / 50 <= ratio <= 50, f"n={n:.0e}: ratio {ratio:.3g}"

    def test_coherent_at_large_n(self, gauss_gauss):
        """Test numeric and asymptotic bandwidths agree within 5% at n = 1e8"""
        ratio = numeric_bandwidth(1e8, gauss_gauss) / asymptotic_bandwidth(1e8, gauss_gauss)
        assert abs(ratio - 1) < 0.05

    def test_equation_residual(self, gauss_gauss):
        """Test the Equal bandwidth nearly solves the balance equation"""
        n = 1e12
        residual = verify_equation_residual(asymptotic_bandwidth(n, gauss_gauss), n, gauss_gauss)
        assert abs(residual) < 0.05 * math.log(n)


class TestTheoreticalRate:
    """Test theoretical_rate and its power/log split"""

    def test_ordinary_power(self, laplace_laplace):
        """Test n^{-2delta/(2delta+2gamma+1)}"""
        p = -2 * 1.49 / (2 * 1.49 + 4 + 1)
        assert rate_power_exponent(laplace_laplace) == pytest.approx(p)
        assert theoretical_rate(1e4, laplace_laplace) == pytest.approx(1e4 ** p)

    def test_ordinary_mse_power(self, laplace_laplace):
        """Test n^{(1-2delta)/(2delta+2gamma)} for MSE"""
        params = laplace_laplace.with_risk("mse")
        assert rate_power_exponent(params) == pytest.approx((1 - 2.98) / (2.98 + 4))

    def test_equal_rate(self, gauss_gauss):
        """Test n^{-a/(a+b)} (ln n)^{-xi}"""
        n = 1e6
        expected = n ** -0.5 * math.log(n) ** -0.25
        assert theoretical_rate(n, gauss_gauss) == pytest.approx(expected, rel=1e-12)

    def test_super_ordinary_rate(self):
        """Test (ln n)^{(2gamma+1)/r} / n"""
        params = ProblemParams.from_values(delta=0.0, r=2.0, a=0.5, gamma=2.0, b=0.0, s=0.0)
        n = 1e5
        assert theoretical_rate(n, params) == pytest.approx(math.log(n) ** 2.5 / n, rel=1e-12)
        assert rate_power_exponent(params) == -1.0

    def test_ordinary_super_rate(self):
        """Test (ln n)^{-2delta/s}"""
        params = ProblemParams.from_values(delta=1.49, r=0.0, a=0.0, gamma=0.0, b=0.5, s=2.0)
        n = 1e5
        assert theoretical_rate(n, params) == pytest.approx(math.log(n) ** -1.49, rel=1e-12)
        assert rate_power_exponent(params) == 0.0

    def test_log_factor_split(self, gauss_gauss):
        """Test rate = n^p * log factor"""
        n = 1e7
        p = rate_power_exponent(gauss_gauss)
        assert n ** p * rate_log_factor(n, gauss_gauss) == pytest.approx(theoretical_rate(n, gauss_gauss), rel=1e-10)

    def test_rate_decreases(self, bias_dominant):
        """Test the bias-dominant rate decreases along n"""
        logs = [log_theoretical_rate(n, bias_dominant) for n in (1e4, 1e6, 1e8)]
        assert logs[0] > logs[1] > logs[2]
