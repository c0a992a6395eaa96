"""Logit-scale inference for win probability estimates and effect conversions.

Tests and confidence intervals are formed on the log-odds scale: the interval
is computed for logit(theta) with a delta-method standard error and mapped
back, which keeps the limits inside (0, 1) and makes the two-sided p-value
and the interval two faces of the same statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import norm

from .errors import ConfigurationError, DegenerateInference

METHOD_GPC = "gpc"
METHOD_CCA = "cca"
METHOD_MMRM = "mmrm"


@dataclass(frozen=True)
class WinPEstimate:
    """A win probability estimate with logit-scale interval and test.

    ``ci_low``/``ci_high``/``p_value`` are ``None`` for degenerate estimates
    (boundary theta or zero standard error) where only the point estimate is
    reportable.
    """

    theta: float
    std_error: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    p_value: Optional[float]
    alpha: float
    method: str
    timepoint: int

    @property
    def degenerate(self) -> bool:
        return self.ci_low is None


@dataclass(frozen=True)
class EffectConversions:
    """Equivalent effect measures implied by a win probability."""

    net_benefit: float
    win_odds: float
    smd_equivalent: float


def logit_inference(
    theta: float, std_error: float, alpha: float = 0.05
) -> tuple[float, float, float]:
    """Confidence limits and two-sided p-value for a win probability.

    Returns ``(ci_low, ci_high, p_value)``.  Raises ``DegenerateInference``
    when ``theta`` sits on the boundary or ``std_error`` is zero; the raw
    estimate should then be reported on its own.
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")
    if not (math.isfinite(theta) and math.isfinite(std_error)):
        raise ConfigurationError("theta and std_error must be finite")
    if theta <= 0.0 or theta >= 1.0 or std_error == 0.0:
        raise DegenerateInference(
            f"cannot form logit-scale inference for theta={theta} with "
            f"std_error={std_error}; report the raw estimate only",
            theta=theta,
        )
    if std_error < 0.0:
        raise ConfigurationError(f"std_error must be nonnegative, got {std_error}")

    logit = math.log(theta / (1.0 - theta))
    scale = std_error / (theta * (1.0 - theta))
    statistic = logit / scale
    p_value = 2.0 * float(norm.sf(abs(statistic)))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    low = logit - z * scale
    high = logit + z * scale
    expit = lambda x: 1.0 / (1.0 + math.exp(-x))  # noqa: E731 - tiny local helper
    return expit(low), expit(high), p_value


def make_estimate(
    theta: float,
    std_error: float,
    alpha: float,
    method: str,
    timepoint: int,
) -> WinPEstimate:
    """Bundle a point estimate with its logit-scale interval and test."""
    ci_low, ci_high, p_value = logit_inference(theta, std_error, alpha)
    return WinPEstimate(
        theta=theta,
        std_error=std_error,
        ci_low=ci_low,
        ci_high=ci_high,
        p_value=p_value,
        alpha=alpha,
        method=method,
        timepoint=timepoint,
    )


def degenerate_estimate(
    theta: float, std_error: float, alpha: float, method: str, timepoint: int
) -> WinPEstimate:
    return WinPEstimate(
        theta=theta,
        std_error=std_error,
        ci_low=None,
        ci_high=None,
        p_value=None,
        alpha=alpha,
        method=method,
        timepoint=timepoint,
    )


def convert_effects(theta: float) -> EffectConversions:
    """Net benefit, win odds, and the normal-model standardized-difference equivalent."""
    if not (0.0 < theta < 1.0):
        raise DegenerateInference(
            f"effect conversions are undefined at theta={theta}", theta=theta
        )
    return EffectConversions(
        net_benefit=2.0 * theta - 1.0,
        win_odds=theta / (1.0 - theta),
        smd_equivalent=math.sqrt(2.0) * float(norm.ppf(theta)),
    )
