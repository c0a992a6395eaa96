"""Domain types for two-arm longitudinal trial data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InputError


class Direction(Enum):
    """Which way scores are better: larger values win or smaller values win."""

    HIGHER_WINS = "higher"
    LOWER_WINS = "lower"

    @classmethod
    def from_label(cls, label: str) -> "Direction":
        for member in cls:
            if member.value == label:
                return member
        raise InputError(f"unknown direction {label!r}; expected 'higher' or 'lower'")

    def flipped(self) -> "Direction":
        return Direction.LOWER_WINS if self is Direction.HIGHER_WINS else Direction.HIGHER_WINS


@dataclass(frozen=True)
class Subject:
    """One participant: arm assignment, baseline score, post-baseline outcomes.

    ``None`` marks a missing value.  ``outcomes`` excludes the baseline and is
    ordered from the first post-baseline timepoint to the landmark.
    """

    subject_id: str
    arm: int
    baseline: Optional[float]
    outcomes: tuple[Optional[float], ...]


def _check_finite(value: Optional[float], where: str) -> None:
    if value is not None and not math.isfinite(value):
        raise InputError(f"non-finite score at {where}")


@dataclass(frozen=True)
class TrialData:
    """Immutable container for a two-arm trial with repeated measurements."""

    subjects: tuple[Subject, ...]
    direction: Direction
    timepoint_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.subjects:
            raise InputError("trial contains no subjects")
        n_t = len(self.timepoint_labels)
        if n_t < 1:
            raise InputError("at least one post-baseline timepoint is required")
        seen_ids: set[str] = set()
        arms_present = {0: False, 1: False}
        for subj in self.subjects:
            if subj.subject_id in seen_ids:
                raise InputError(f"duplicate subject id {subj.subject_id!r}")
            seen_ids.add(subj.subject_id)
            if subj.arm not in (0, 1):
                raise InputError(
                    f"subject {subj.subject_id!r} has arm {subj.arm!r}; expected 0 or 1"
                )
            arms_present[subj.arm] = True
            if len(subj.outcomes) != n_t:
                raise InputError(
                    f"subject {subj.subject_id!r} has {len(subj.outcomes)} outcomes; "
                    f"expected {n_t}"
                )
            _check_finite(subj.baseline, f"{subj.subject_id!r} baseline")
            for t, value in enumerate(subj.outcomes):
                _check_finite(value, f"{subj.subject_id!r} timepoint {t + 1}")
        for g, present in arms_present.items():
            if not present:
                raise InputError(f"arm {g} has no subjects")

    @property
    def n_timepoints(self) -> int:
        return len(self.timepoint_labels)

    @property
    def landmark(self) -> int:
        """Index of the final (landmark) post-baseline timepoint."""
        return self.n_timepoints - 1

    def arm_subjects(self, arm: int) -> tuple[Subject, ...]:
        return tuple(s for s in self.subjects if s.arm == arm)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (arms, baselines, outcomes) with ``nan`` marking missing values.

        Rows follow ``self.subjects`` order; ``outcomes`` has one column per
        post-baseline timepoint.
        """
        n = len(self.subjects)
        arms = np.fromiter((s.arm for s in self.subjects), dtype=np.int64, count=n)
        baselines = np.array(
            [np.nan if s.baseline is None else float(s.baseline) for s in self.subjects]
        )
        outcomes = np.full((n, self.n_timepoints), np.nan)
        for i, subj in enumerate(self.subjects):
            for t, value in enumerate(subj.outcomes):
                if value is not None:
                    outcomes[i, t] = float(value)
        return arms, baselines, outcomes

    def observed_counts(self, arm: int) -> tuple[int, ...]:
        """Number of observed outcomes in ``arm`` at each post-baseline timepoint."""
        counts = [0] * self.n_timepoints
        for subj in self.arm_subjects(arm):
            for t, value in enumerate(subj.outcomes):
                if value is not None:
                    counts[t] += 1
        return tuple(counts)

    def with_direction(self, direction: Direction) -> "TrialData":
        return TrialData(self.subjects, direction, self.timepoint_labels)
