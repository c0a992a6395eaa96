"""Pairwise win scores, midranks, and timepoint-specific win fractions.

A subject wins a pairwise comparison when its score beats the opposing score
in the better direction; ties count one half.  Win fractions against the
opposing arm are computed from midranks rather than explicit pairwise loops,
which keeps each timepoint O(n log n) while agreeing exactly with the
brute-force pairwise definition (the rank arithmetic stays on half-integers,
so no rounding is introduced before the final division).

Ties are detected with exact floating-point equality on purpose: ingested
scores arrive at limited precision and a tolerance window would make results
depend on the window.  All functions are pure and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Direction
from .errors import EmptyArm, InputError, InsufficientData

__all__ = [
    "win_score",
    "midranks",
    "win_fractions",
    "two_sample_variance",
    "ThetaEstimate",
    "single_timepoint_theta",
]


def win_score(a: float, b: float, direction: Direction) -> float:
    """Score the comparison of ``a`` against ``b``: 1 win, 0.5 tie, 0 loss."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InputError(f"win_score requires finite inputs, got ({a!r}, {b!r})")
    s = math.copysign(1.0, a - b) if a != b else 0.0
    if direction is Direction.HIGHER_WINS:
        return (s + 1.0) / 2.0
    return (1.0 - s) / 2.0


def _ascending_midranks(values: np.ndarray) -> np.ndarray:
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    del uniq
    ends = np.cumsum(counts)
    starts = ends - counts
    group_mid = starts + (counts + 1) / 2.0
    return group_mid[inverse]


def midranks(values, direction: Direction) -> np.ndarray:
    """Midranks of ``values``: tied scores share the average of their span.

    Equivalent to one half plus the sum of pairwise win scores of each value
    against the whole list (itself included); the output always sums to
    n(n+1)/2.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InputError("midranks requires a nonempty one-dimensional input")
    if not np.all(np.isfinite(v)):
        raise InputError("midranks requires finite values")
    asc = _ascending_midranks(v)
    if direction is Direction.HIGHER_WINS:
        return asc
    return (v.size + 1.0) - asc


def win_fractions(
    arm1, arm0, direction: Direction, timepoint: str | int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject fractions of pairwise wins against the opposing arm.

    Returns ``(frac1, frac0)`` aligned with the input orders.  Each entry
    equals the mean pairwise win score of that subject against every opposing
    observation, computed as (overall midrank - within-arm midrank) divided by
    the opposing arm's size.
    """
    a1 = np.asarray(arm1, dtype=float)
    a0 = np.asarray(arm0, dtype=float)
    where = "" if timepoint is None else f" at timepoint {timepoint}"
    if a1.size == 0:
        raise EmptyArm(f"arm 1 has no observed scores{where}")
    if a0.size == 0:
        raise EmptyArm(f"arm 0 has no observed scores{where}")
    overall = midranks(np.concatenate([a1, a0]), direction)
    frac1 = (overall[: a1.size] - midranks(a1, direction)) / a0.size
    frac0 = (overall[a1.size :] - midranks(a0, direction)) / a1.size
    return frac1, frac0


def two_sample_variance(frac1: np.ndarray, frac0: np.ndarray) -> float:
    """Variance of the mean arm-1 win fraction from both arms' spreads.

    Sum over arms of (squared deviations from the arm mean) / (n (n - 1)).
    Requires at least two observations per arm.
    """
    f1 = np.asarray(frac1, dtype=float)
    f0 = np.asarray(frac0, dtype=float)
    n1, n0 = f1.size, f0.size
    if n1 < 2 or n0 < 2:
        raise InsufficientData(
            f"variance needs at least 2 observed subjects per arm, got {n1} and {n0}"
        )
    ss1 = float(np.sum((f1 - f1.mean()) ** 2))
    ss0 = float(np.sum((f0 - f0.mean()) ** 2))
    return ss1 / (n1 * (n1 - 1)) + ss0 / (n0 * (n0 - 1))


@dataclass(frozen=True)
class ThetaEstimate:
    """Single-timepoint win probability estimate with its sampling variance."""

    theta: float
    variance: float
    n1: int
    n0: int


def single_timepoint_theta(arm1, arm0, direction: Direction) -> ThetaEstimate:
    """Estimate the probability that a random arm-1 score beats a random arm-0 score.

    The point estimate is the mean arm-1 win fraction; the variance adds both
    arms' win-fraction spreads.  A zero variance is a legal outcome for
    degenerate constant-fraction samples — inference layers must refuse it.
    """
    a1 = np.asarray(arm1, dtype=float)
    a0 = np.asarray(arm0, dtype=float)
    if a1.size < 2 or a0.size < 2:
        raise InsufficientData(
            "single-timepoint estimation needs at least 2 observed subjects per arm, "
            f"got {a1.size} and {a0.size}"
        )
    frac1, frac0 = win_fractions(a1, a0, direction)
    return ThetaEstimate(
        theta=float(frac1.mean()),
        variance=two_sample_variance(frac1, frac0),
        n1=int(a1.size),
        n0=int(a0.size),
    )
