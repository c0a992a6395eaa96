"""End-to-end landmark win probability procedures.

Three estimators share one inference tail (logit-scale intervals and tests):

* carry-forward pairwise scoring ("gpc"): every pair of opposing subjects is
  scored once, at the latest timepoint where both are observed, falling back
  to the baseline and finally to a half point for pairs sharing no data;
* complete-case landmark analysis ("cca"): win fractions at the landmark
  among subjects observed there;
* repeated-measures model ("mmrm"): timepoint-specific win fractions analyzed
  jointly under per-arm unstructured covariance, one estimate per timepoint
  with the landmark last.

All three regress win fractions on an intercept, the arm indicator, and (by
default) the baseline win fraction, allowing each arm its own residual
variance (the fit is the one-timepoint case of the repeated-measures
machinery).  The arm coefficient estimates twice the win probability minus
one, and — because the two arms' mean fractions are exact complements — its
sampling variance is already the variance of the win probability estimate,
with no further scaling.  Without the covariate, that variance reduces
exactly to the classic two-sample win-fraction expression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Direction, Subject, TrialData
from .errors import DegenerateInference, InsufficientData
from .inference import (
    METHOD_CCA,
    METHOD_GPC,
    METHOD_MMRM,
    WinPEstimate,
    degenerate_estimate,
    make_estimate,
)
from .mmrm import MmrmFit, build_design, estimate_contrast, fit_reml
from .ranks import win_fractions

__all__ = [
    "gpc_score_pair",
    "gpc_win_fractions",
    "baseline_win_fractions",
    "timepoint_win_fractions",
    "gpc_estimate",
    "cca_estimate",
    "mmrm_estimate",
    "gpc_analysis",
    "cca_analysis",
    "mmrm_analysis",
    "GpcPanel",
    "MethodOutput",
]


def gpc_score_pair(
    subject1: Subject, subject0: Subject, direction: Direction
) -> tuple[float, bool]:
    """Score one arm-1/arm-0 pair at the latest commonly observed timepoint.

    Walks the post-baseline timepoints from the landmark backwards, then the
    baseline.  Returns ``(score, resolved)``: when no comparison is possible
    at any level the score is 0.5 and ``resolved`` is False so callers can
    count unresolved pairs.  Total by construction — never raises.
    """
    for t in reversed(range(len(subject1.outcomes))):
        a = subject1.outcomes[t]
        b = subject0.outcomes[t]
        if a is not None and b is not None:
            return _score(a, b, direction), True
    if subject1.baseline is not None and subject0.baseline is not None:
        return _score(subject1.baseline, subject0.baseline, direction), True
    return 0.5, False


def _score(a: float, b: float, direction: Direction) -> float:
    if a == b:
        return 0.5
    if direction is Direction.HIGHER_WINS:
        return 1.0 if a > b else 0.0
    return 1.0 if a < b else 0.0


@dataclass(frozen=True)
class GpcPanel:
    """Carry-forward win fractions per subject, with full-arm denominators."""

    frac1: np.ndarray
    frac0: np.ndarray
    unresolved_pairs: int


def gpc_win_fractions(data: TrialData) -> GpcPanel:
    """Carry-forward fractions for every subject against the whole opposing arm."""
    arms, base, out = data.arrays()
    observed = np.isfinite(out)
    idx1 = arms == 1
    idx0 = arms == 0
    out1, out0 = out[idx1], out[idx0]
    obs1, obs0 = observed[idx1], observed[idx0]
    higher = data.direction is Direction.HIGHER_WINS

    scores = np.full((out1.shape[0], out0.shape[0]), 0.5)
    resolved = np.zeros(scores.shape, dtype=bool)
    for t in reversed(range(data.n_timepoints)):
        newly = (obs1[:, t][:, None] & obs0[None, :, t]) & ~resolved
        if not newly.any():
            continue
        with np.errstate(invalid="ignore"):
            sign = np.sign(out1[:, t][:, None] - out0[None, :, t])
        h = (sign + 1.0) / 2.0 if higher else (1.0 - sign) / 2.0
        scores[newly] = h[newly]
        resolved |= newly

    unresolved = 0
    if not resolved.all():
        b1 = np.isfinite(base[idx1])
        b0 = np.isfinite(base[idx0])
        newly = (b1[:, None] & b0[None, :]) & ~resolved
        if newly.any():
            with np.errstate(invalid="ignore"):
                sign = np.sign(base[idx1][:, None] - base[idx0][None, :])
            h = (sign + 1.0) / 2.0 if higher else (1.0 - sign) / 2.0
            scores[newly] = h[newly]
            resolved |= newly
        unresolved = int((~resolved).sum())

    return GpcPanel(
        frac1=scores.mean(axis=1),
        frac0=(1.0 - scores).mean(axis=0),
        unresolved_pairs=unresolved,
    )


def baseline_win_fractions(data: TrialData) -> np.ndarray:
    """Baseline win fractions per subject (nan where the baseline is missing)."""
    arms, base, _ = data.arrays()
    result = np.full(arms.shape, np.nan)
    fin = np.isfinite(base)
    sel1 = fin & (arms == 1)
    sel0 = fin & (arms == 0)
    if sel1.any() and sel0.any():
        f1, f0 = win_fractions(base[sel1], base[sel0], data.direction, timepoint="baseline")
        result[sel1] = f1
        result[sel0] = f0
    return result


def timepoint_win_fractions(data: TrialData) -> np.ndarray:
    """Win fractions per subject and post-baseline timepoint among the observed.

    Denominators are the opposing arm's observed count at each timepoint;
    entries are nan where the subject's own outcome is missing.
    """
    arms, _, out = data.arrays()
    result = np.full(out.shape, np.nan)
    for t in range(data.n_timepoints):
        fin = np.isfinite(out[:, t])
        sel1 = fin & (arms == 1)
        sel0 = fin & (arms == 0)
        f1, f0 = win_fractions(out[sel1, t], out[sel0, t], data.direction, timepoint=t + 1)
        result[sel1, t] = f1
        result[sel0, t] = f0
    return result


@dataclass
class MethodOutput:
    """Estimates plus the bookkeeping an analysis report needs."""

    estimates: list[WinPEstimate]
    warnings: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def landmark(self) -> WinPEstimate:
        return self.estimates[-1]


def _ancova_theta(
    fractions: np.ndarray,
    arms: np.ndarray,
    covariate: np.ndarray | None,
    include_rows: np.ndarray,
) -> tuple[float, float, int, int, bool]:
    """Regress fractions on arm (and optionally a covariate); map to a win probability.

    Each arm keeps its own residual variance, estimated by restricted
    likelihood.  Returns (theta, std_error, n_rows_used,
    n_dropped_missing_covariate, converged).
    """
    rows = include_rows & np.isfinite(fractions)
    n_dropped = 0
    if covariate is not None:
        with_cov = rows & np.isfinite(covariate)
        n_dropped = int(rows.sum() - with_cov.sum())
        rows = with_cov
    blocks, _ = build_design(
        fractions[rows].reshape(-1, 1),
        covariate[rows] if covariate is not None else None,
        arms[rows],
        covariate is not None,
    )
    fit = fit_reml(blocks, 1)
    contrast, std_error = estimate_contrast(fit, fit.treatment_contrast(0))
    theta = float(contrast / 2.0 + 0.5)
    return theta, float(std_error), int(rows.sum()), n_dropped, fit.converged


def gpc_analysis(
    data: TrialData, alpha: float = 0.05, baseline_covariate: bool = True
) -> MethodOutput:
    panel = gpc_win_fractions(data)
    arms, _, _ = data.arrays()
    fractions = np.empty(arms.shape, dtype=float)
    fractions[arms == 1] = panel.frac1
    fractions[arms == 0] = panel.frac0
    covariate = baseline_win_fractions(data) if baseline_covariate else None
    theta, se, n_used, n_dropped, converged = _ancova_theta(
        fractions, arms, covariate, np.ones(arms.shape, dtype=bool)
    )

    warnings = []
    if panel.unresolved_pairs:
        warnings.append(
            f"{panel.unresolved_pairs} pair(s) shared no observed timepoint or baseline "
            "and scored 0.5"
        )
    if n_dropped:
        warnings.append(f"excluded {n_dropped} subject(s) with missing baseline from the regression")
    if not converged:
        warnings.append("variance estimation did not converge; using the last accepted iterate")

    timepoint = data.landmark
    try:
        estimate = make_estimate(theta, se, alpha, METHOD_GPC, timepoint)
    except DegenerateInference as exc:
        warnings.append(str(exc))
        estimate = degenerate_estimate(theta, se, alpha, METHOD_GPC, timepoint)
    return MethodOutput(
        estimates=[estimate],
        warnings=warnings,
        details={
            "unresolved_pairs": panel.unresolved_pairs,
            "n_regression_rows": n_used,
            "n_missing_baseline": n_dropped,
            "converged": converged,
        },
    )


def gpc_estimate(
    data: TrialData, alpha: float = 0.05, baseline_covariate: bool = True
) -> WinPEstimate:
    """Carry-forward landmark estimate; raises on degenerate inference."""
    output = gpc_analysis(data, alpha, baseline_covariate)
    est = output.landmark
    if est.degenerate:
        raise DegenerateInference(
            f"cannot form logit-scale inference for theta={est.theta}; "
            "report the raw estimate only",
            theta=est.theta,
        )
    return est


def cca_analysis(
    data: TrialData, alpha: float = 0.05, baseline_covariate: bool = True
) -> MethodOutput:
    arms, _, out = data.arrays()
    landmark = data.landmark
    at_landmark = np.isfinite(out[:, landmark])
    n1 = int(np.sum(at_landmark & (arms == 1)))
    n0 = int(np.sum(at_landmark & (arms == 0)))
    if n1 < 2 or n0 < 2:
        raise InsufficientData(
            f"complete-case analysis needs at least 2 subjects per arm observed at the "
            f"landmark, got {n1} and {n0}"
        )
    fractions = timepoint_win_fractions(data)[:, landmark]
    covariate = baseline_win_fractions(data) if baseline_covariate else None
    theta, se, n_used, n_dropped, converged = _ancova_theta(fractions, arms, covariate, at_landmark)

    warnings = []
    if n_dropped:
        warnings.append(f"excluded {n_dropped} subject(s) with missing baseline from the regression")
    if not converged:
        warnings.append("variance estimation did not converge; using the last accepted iterate")
    try:
        estimate = make_estimate(theta, se, alpha, METHOD_CCA, landmark)
    except DegenerateInference as exc:
        warnings.append(str(exc))
        estimate = degenerate_estimate(theta, se, alpha, METHOD_CCA, landmark)
    return MethodOutput(
        estimates=[estimate],
        warnings=warnings,
        details={
            "n_landmark_observed": {"arm0": n0, "arm1": n1},
            "n_regression_rows": n_used,
            "n_missing_baseline": n_dropped,
            "converged": converged,
        },
    )


def cca_estimate(
    data: TrialData, alpha: float = 0.05, baseline_covariate: bool = True
) -> WinPEstimate:
    """Complete-case landmark estimate; raises on degenerate inference."""
    output = cca_analysis(data, alpha, baseline_covariate)
    est = output.landmark
    if est.degenerate:
        raise DegenerateInference(
            f"cannot form logit-scale inference for theta={est.theta}; "
            "report the raw estimate only",
            theta=est.theta,
        )
    return est


def mmrm_analysis(
    data: TrialData,
    alpha: float = 0.05,
    baseline_covariate: bool = True,
    *,
    restricted: bool = True,
    max_iter: int = 200,
) -> tuple[MethodOutput, MmrmFit]:
    arms, _, _ = data.arrays()
    fractions = timepoint_win_fractions(data)
    covariate = baseline_win_fractions(data) if baseline_covariate else None
    blocks, warnings = build_design(fractions, covariate, arms, baseline_covariate)
    fit = fit_reml(blocks, data.n_timepoints, restricted=restricted, max_iter=max_iter)
    if not fit.converged:
        warnings.append(
            f"covariance optimization did not converge within {fit.iterations} iterations; "
            "estimates use the last accepted iterate"
        )

    estimates = []
    for t in range(data.n_timepoints):
        contrast, se = estimate_contrast(fit, fit.treatment_contrast(t))
        theta = contrast / 2.0 + 0.5
        try:
            estimates.append(make_estimate(theta, se, alpha, METHOD_MMRM, t))
        except DegenerateInference as exc:
            warnings.append(f"timepoint {t + 1}: {exc}")
            estimates.append(degenerate_estimate(theta, se, alpha, METHOD_MMRM, t))
    output = MethodOutput(
        estimates=estimates,
        warnings=warnings,
        details={
            "converged": fit.converged,
            "iterations": fit.iterations,
            "loglik": fit.loglik,
            "n_subjects_fit": {"arm0": fit.n_subjects[0], "arm1": fit.n_subjects[1]},
        },
    )
    return output, fit


def mmrm_estimate(
    data: TrialData,
    alpha: float = 0.05,
    baseline_covariate: bool = True,
    *,
    restricted: bool = True,
    max_iter: int = 200,
) -> list[WinPEstimate]:
    """Per-timepoint estimates from the repeated-measures fit; landmark last.

    Non-convergence is reported through the analysis interface, not as an
    error; the returned estimates always use the best accepted iterate.
    """
    output, _ = mmrm_analysis(
        data, alpha, baseline_covariate, restricted=restricted, max_iter=max_iter
    )
    return output.estimates
