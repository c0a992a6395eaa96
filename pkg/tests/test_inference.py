"""Logit-scale confidence intervals, tests, and effect-measure conversions."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from winprob import WinPEstimate, convert_effects, logit_inference
from winprob.errors import ConfigurationError, DegenerateInference
from winprob.inference import degenerate_estimate, make_estimate

thetas = st.floats(0.02, 0.98).map(lambda x: round(x, 4))
errors = st.floats(0.001, 0.3).map(lambda x: round(x, 4))


class TestLogitInference:
    def test_null_point_gives_p_one_and_symmetry(self):
        lo, hi, p = logit_inference(0.5, 0.07)
        assert p == pytest.approx(1.0)
        assert lo + hi == pytest.approx(1.0, abs=1e-12)

    def test_reference_interval_mid_seventies(self):
        # se chosen by inverting the interval (0.611, 0.834) at theta 0.737.
        lo, hi, p = logit_inference(0.737, 0.057488)
        assert (lo, hi) == pytest.approx((0.611, 0.834), abs=2e-3)
        assert p == pytest.approx(0.0005, abs=2e-4)

    def test_reference_interval_high_eighties(self):
        lo, hi, p = logit_inference(0.875, 0.05553)
        assert (lo, hi) == pytest.approx((0.722, 0.950), abs=1e-3)
        assert p == pytest.approx(0.00012, abs=2e-5)

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.7])
    def test_endpoint_theta_degenerate(self, theta):
        with pytest.raises(DegenerateInference, match="raw estimate"):
            logit_inference(theta, 0.05)

    def test_zero_std_error_degenerate(self):
        with pytest.raises(DegenerateInference):
            logit_inference(0.6, 0.0)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, float("nan")])
    def test_bad_alpha_rejected(self, alpha):
        with pytest.raises(ConfigurationError):
            logit_inference(0.6, 0.05, alpha)

    def test_negative_std_error_rejected(self):
        with pytest.raises(ConfigurationError):
            logit_inference(0.6, -0.01)

    @given(thetas, errors)
    @settings(max_examples=300)
    def test_interval_brackets_estimate(self, theta, se):
        lo, hi, _ = logit_inference(theta, se)
        assert 0.0 < lo < theta < hi < 1.0

    @given(thetas, errors)
    @settings(max_examples=300)
    def test_p_below_alpha_iff_half_outside_interval(self, theta, se):
        lo, hi, p = logit_inference(theta, se)
        assert (p < 0.05) == (0.5 < lo or 0.5 > hi)

    @given(thetas, errors)
    @settings(max_examples=100)
    def test_smaller_alpha_widens_interval(self, theta, se):
        lo5, hi5, _ = logit_inference(theta, se, 0.05)
        lo1, hi1, _ = logit_inference(theta, se, 0.01)
        assert lo1 <= lo5 and hi1 >= hi5

    @given(thetas, errors)
    @settings(max_examples=100)
    def test_complement_symmetry(self, theta, se):
        lo, hi, p = logit_inference(theta, se)
        lo_c, hi_c, p_c = logit_inference(1.0 - theta, se)
        assert lo_c == pytest.approx(1.0 - hi, abs=1e-10)
        assert hi_c == pytest.approx(1.0 - lo, abs=1e-10)
        assert p_c == pytest.approx(p, abs=1e-10)


class TestEstimateConstruction:
    def test_make_estimate_populates_interval(self):
        est = make_estimate(0.7, 0.06, 0.05, "gpc", 2)
        assert isinstance(est, WinPEstimate)
        assert not est.degenerate
        assert est.method == "gpc" and est.timepoint == 2
        assert est.ci_low < est.theta < est.ci_high

    def test_degenerate_estimate_has_null_interval(self):
        est = degenerate_estimate(1.0, 0.0, 0.05, "cca", 0)
        assert est.degenerate
        assert est.ci_low is None and est.ci_high is None and est.p_value is None
        assert est.theta == 1.0

    def test_make_estimate_raises_on_endpoint(self):
        with pytest.raises(DegenerateInference) as excinfo:
            make_estimate(1.0, 0.05, 0.05, "gpc", 0)
        assert excinfo.value.theta == 1.0


class TestConversions:
    def test_null_value(self):
        c = convert_effects(0.5)
        assert c.net_benefit == 0.0
        assert c.win_odds == 1.0
        assert c.smd_equivalent == pytest.approx(0.0, abs=1e-15)

    def test_three_quarters_win_odds(self):
        assert convert_effects(0.75).win_odds == pytest.approx(3.0, rel=1e-12)

    @pytest.mark.parametrize(
        "theta, smd",
        [(0.56, 0.2135), (0.64, 0.5069), (0.71, 0.7826)],
    )
    def test_standardized_difference_benchmarks(self, theta, smd):
        assert convert_effects(theta).smd_equivalent == pytest.approx(smd, abs=5e-4)

    @pytest.mark.parametrize("theta", [0.0, 1.0])
    def test_endpoints_rejected(self, theta):
        with pytest.raises(DegenerateInference):
            convert_effects(theta)

    @given(thetas)
    @settings(max_examples=300)
    def test_win_odds_round_trip(self, theta):
        wo = convert_effects(theta).win_odds
        assert wo / (1.0 + wo) == pytest.approx(theta, abs=1e-12)

    @given(thetas)
    def test_net_benefit_definition_and_range(self, theta):
        c = convert_effects(theta)
        assert c.net_benefit == 2.0 * theta - 1.0
        assert -1.0 < c.net_benefit < 1.0

    @given(thetas)
    @settings(max_examples=100)
    def test_smd_is_odd_around_half(self, theta):
        a = convert_effects(theta).smd_equivalent
        b = convert_effects(1.0 - theta).smd_equivalent
        assert a == pytest.approx(-b, abs=1e-10)
