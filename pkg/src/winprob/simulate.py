"""Monte Carlo harness: trajectory generation, dropout mechanisms, and metrics.

Complete trajectories are multivariate normal (baseline plus three
post-baseline timepoints) with arm-specific means and covariances from a
built-in registry of four mean-profile shapes; lower scores are better
throughout.  Dropout is applied per replicate by one of three mechanisms:

* completely random: fixed 10% waves starting at each post-baseline time;
* random given the observed past ("mar"): a high score triggers dropout with
  an arm-specific probability, deleting everything after the trigger;
* not at random ("mnar"): as above, but the triggering score itself is also
  deleted.

Every replicate draws from its own named random stream keyed by
(master seed, replicate index, purpose), so results are independent of
execution order and thread count.  Reductions run in fixed replicate order,
making whole reports bit-stable.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .data import Direction, Subject, TrialData
from .errors import ConfigurationError, DegenerateInference, WinprobError
from .methods import cca_analysis, gpc_analysis, mmrm_analysis

__all__ = [
    "Scenario",
    "DeletionParams",
    "SimulationReport",
    "true_theta",
    "generate_complete",
    "apply_mcar",
    "apply_mar_mnar",
    "run_study",
    "scenario_registry",
    "landmark_dropout_percentages",
    "DELETION_COMBOS",
    "TRAJECTORY_MEANS",
    "COV_ARM0",
    "COV_ARM1",
]

N_TIMEPOINTS = 3  # post-baseline
_LABELS = ("time1", "time2", "time3")

TRAJECTORY_MEANS: dict[int, tuple[tuple[float, ...], tuple[float, ...]]] = {
    1: ((20.0, 16.0, 12.0, 11.0), (20.0, 16.0, 12.0, 11.0)),
    2: ((20.0, 16.0, 12.0, 11.0), (20.0, 15.0, 9.0, 11.0)),
    3: ((20.0, 16.0, 12.0, 11.0), (20.0, 15.0, 9.0, 10.0)),
    4: ((20.0, 15.0, 9.0, 11.0), (20.0, 16.0, 12.0, 9.0)),
}

COV_ARM0 = np.array(
    [
        [15.6, 12.9, 4.8, 4.4],
        [12.9, 37.5, 22.8, 11.6],
        [4.8, 22.8, 34.2, 17.9],
        [4.4, 11.6, 17.9, 21.9],
    ]
)
COV_ARM1 = np.array(
    [
        [12.8, 7.4, 3.6, 7.1],
        [7.4, 43.2, 22.7, 23.8],
        [3.6, 22.7, 21.8, 18.8],
        [7.1, 23.8, 18.8, 22.4],
    ]
)

try:
    _CHOL0 = np.linalg.cholesky(COV_ARM0)
    _CHOL1 = np.linalg.cholesky(COV_ARM1)
except np.linalg.LinAlgError as _exc:  # pragma: no cover - registry matrices are fixed
    raise ConfigurationError(f"registry covariance is not positive definite: {_exc}")


@dataclass(frozen=True)
class DeletionParams:
    """Trigger thresholds and dropout probabilities per arm (strict '>' triggers)."""

    trigger0: float
    trigger1: float
    prob0: float
    prob1: float


DELETION_COMBOS: dict[int, DeletionParams] = {
    1: DeletionParams(16.0, 16.0, 0.4, 0.4),
    2: DeletionParams(16.0, 15.0, 0.4, 0.4),
    3: DeletionParams(16.0, 16.0, 0.5, 0.3),
    4: DeletionParams(16.0, 15.0, 0.5, 0.3),
}

MECHANISMS = ("none", "mcar", "mar", "mnar")


@dataclass(frozen=True)
class Scenario:
    """One simulation cell: trajectory, dropout mechanism, and sample sizes."""

    trajectory: int
    mechanism: str
    combo: Optional[int] = None
    n0: int = 50
    n1: int = 50

    def __post_init__(self) -> None:
        if self.trajectory not in TRAJECTORY_MEANS:
            raise ConfigurationError(f"unknown trajectory {self.trajectory}; expected 1..4")
        if self.mechanism not in MECHANISMS:
            raise ConfigurationError(
                f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}"
            )
        if self.mechanism in ("mar", "mnar"):
            if self.combo not in DELETION_COMBOS:
                raise ConfigurationError(
                    "mar/mnar scenarios need a deletion combination in 1..4, got "
                    f"{self.combo!r}"
                )
        elif self.combo is not None:
            raise ConfigurationError(
                f"mechanism {self.mechanism!r} takes no deletion combination"
            )
        if self.n0 < 2 or self.n1 < 2:
            raise ConfigurationError("need at least 2 subjects per arm")

    @property
    def means(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        return TRAJECTORY_MEANS[self.trajectory]

    @property
    def deletion(self) -> Optional[DeletionParams]:
        return DELETION_COMBOS[self.combo] if self.combo is not None else None

    @property
    def case_number(self) -> Optional[int]:
        """Global 1..16 numbering used by the mar/mnar reporting tables."""
        if self.combo is None:
            return None
        return (self.trajectory - 1) * 4 + self.combo

    def label(self) -> str:
        if self.mechanism in ("mar", "mnar"):
            return f"trajectory {self.trajectory}, {self.mechanism} case {self.case_number}"
        return f"trajectory {self.trajectory}, {self.mechanism}"


def true_theta(scenario: Scenario | int) -> float:
    """Exact landmark win probability under the generating normal model."""
    trajectory = scenario.trajectory if isinstance(scenario, Scenario) else scenario
    m0, m1 = TRAJECTORY_MEANS[trajectory]
    spread = math.sqrt(COV_ARM0[-1, -1] + COV_ARM1[-1, -1])
    # Lower scores win: arm 1 wins when its score is below arm 0's.
    return float(norm.cdf((m0[-1] - m1[-1]) / spread))


_TAG_GENERATE = 1
_TAG_DELETE = 2


def _stream(master_seed: int, replicate: int, tag: int) -> np.random.Generator:
    seq = np.random.SeedSequence((int(master_seed), int(replicate), int(tag)))
    return np.random.Generator(np.random.PCG64(seq))


def generate_complete(scenario: Scenario, rng: np.random.Generator) -> TrialData:
    """Draw complete trajectories (baseline + 3 timepoints) for both arms.

    Arm 0 is drawn first, then arm 1, each as its Cholesky factor applied to
    a block of standard normals.
    """
    m0, m1 = scenario.means
    draws0 = np.asarray(m0) + rng.standard_normal((scenario.n0, 4)) @ _CHOL0.T
    draws1 = np.asarray(m1) + rng.standard_normal((scenario.n1, 4)) @ _CHOL1.T
    subjects = []
    for i in range(scenario.n0):
        subjects.append(
            Subject(f"c{i + 1:05d}", 0, float(draws0[i, 0]), tuple(map(float, draws0[i, 1:])))
        )
    for i in range(scenario.n1):
        subjects.append(
            Subject(f"t{i + 1:05d}", 1, float(draws1[i, 0]), tuple(map(float, draws1[i, 1:])))
        )
    return TrialData(tuple(subjects), Direction.LOWER_WINS, _LABELS)


def _truncate(subject: Subject, first_missing: int) -> Subject:
    outcomes = subject.outcomes[:first_missing] + (None,) * (
        len(subject.outcomes) - first_missing
    )
    return Subject(subject.subject_id, subject.arm, subject.baseline, outcomes)


def apply_mcar(data: TrialData, rng: np.random.Generator, rate: float = 0.10) -> TrialData:
    """Monotone completely-random dropout with a per-visit hazard of ``rate``.

    Each subject still in the study at a post-baseline visit drops out there
    with probability ``rate``, independently of everything else; dropping out
    at visit s deletes that visit and every later one.  Visit-level dropout is
    therefore ``rate`` at the first post-baseline time and compounds to
    1 - (1 - rate)**3 (27.1% for the default 10%) at the landmark.  Baselines
    are never deleted.
    """
    if rate == 0.0:
        return data
    if not 0.0 < rate < 1.0:
        raise ConfigurationError(f"per-visit dropout rate must be in (0, 1), got {rate}")
    new_subjects = []
    for subject in data.subjects:
        cut = None
        for visit in range(len(subject.outcomes)):
            if rng.random() < rate:
                cut = visit
                break
        new_subjects.append(subject if cut is None else _truncate(subject, cut))
    return TrialData(tuple(new_subjects), data.direction, data.timepoint_labels)


def apply_mar_mnar(
    data: TrialData,
    params: DeletionParams,
    mechanism: str,
    rng: np.random.Generator,
) -> TrialData:
    """Trigger-based dropout; scan stops at the first firing per subject.

    Post-baseline times are scanned in order; at each time whose score
    exceeds the arm's trigger an independent coin with the arm's probability
    decides whether dropout fires there.  "mar" deletes strictly after the
    firing time (the trigger stays observed); "mnar" deletes the firing time
    too.  Baselines are never deleted.
    """
    if mechanism not in ("mar", "mnar"):
        raise ConfigurationError(f"mechanism must be 'mar' or 'mnar', got {mechanism!r}")
    new_subjects = []
    for subject in data.subjects:
        trigger = params.trigger0 if subject.arm == 0 else params.trigger1
        prob = params.prob0 if subject.arm == 0 else params.prob1
        fired = None
        for t, value in enumerate(subject.outcomes):
            if value is None:
                continue
            if value > trigger and rng.random() < prob:
                fired = t
                break
        if fired is None:
            new_subjects.append(subject)
        else:
            cut = fired + 1 if mechanism == "mar" else fired
            new_subjects.append(_truncate(subject, cut))
    return TrialData(tuple(new_subjects), data.direction, data.timepoint_labels)


def _apply_mechanism(scenario: Scenario, data: TrialData, rng: np.random.Generator) -> TrialData:
    if scenario.mechanism == "none":
        return data
    if scenario.mechanism == "mcar":
        return apply_mcar(data, rng)
    return apply_mar_mnar(data, scenario.deletion, scenario.mechanism, rng)


@dataclass(frozen=True)
class SimulationReport:
    """Operating characteristics over the replicate set, in percent.

    Two bias summaries are reported: ``rel_bias_pct`` averages the relative
    error against the true value, while ``std_bias_pct`` scales the mean
    error by the empirical spread of the estimates (mean(error)/sd x 100).
    Tail errors ``ml_pct``/``mr_pct`` count intervals entirely below/above
    the truth; with coverage they sum to 100 over the non-degenerate
    replicates.
    """

    scenario: Scenario
    method: str
    n_reps: int
    seed: int
    true_theta: float
    n_failed: int
    n_degenerate: int
    n_nonconverged: int
    mean_theta: float
    rel_bias_pct: float
    std_bias_pct: float
    coverage_pct: float
    ml_pct: float
    mr_pct: float
    mean_width: float
    power_pct: float

    def to_dict(self) -> dict:
        return {
            "trajectory": self.scenario.trajectory,
            "mechanism": self.scenario.mechanism,
            "combo": self.scenario.combo,
            "case": self.scenario.case_number,
            "n0": self.scenario.n0,
            "n1": self.scenario.n1,
            "method": self.method,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "true_theta": self.true_theta,
            "n_failed": self.n_failed,
            "n_degenerate": self.n_degenerate,
            "n_nonconverged": self.n_nonconverged,
            "mean_theta": self.mean_theta,
            "rel_bias_pct": self.rel_bias_pct,
            "std_bias_pct": self.std_bias_pct,
            "coverage_pct": self.coverage_pct,
            "ml_pct": self.ml_pct,
            "mr_pct": self.mr_pct,
            "mean_width": self.mean_width,
            "power_pct": self.power_pct,
        }


_METHODS = ("gpc", "cca", "mmrm")


def _one_replicate(
    scenario: Scenario,
    method: str,
    master_seed: int,
    replicate: int,
    alpha: float,
    baseline_covariate: bool,
):
    data = generate_complete(scenario, _stream(master_seed, replicate, _TAG_GENERATE))
    data = _apply_mechanism(scenario, data, _stream(master_seed, replicate, _TAG_DELETE))
    try:
        if method == "gpc":
            output = gpc_analysis(data, alpha, baseline_covariate)
        elif method == "cca":
            output = cca_analysis(data, alpha, baseline_covariate)
        else:
            output, _ = mmrm_analysis(data, alpha, baseline_covariate)
        estimate = output.landmark
        converged = bool(output.details.get("converged", True))
    except DegenerateInference as exc:
        theta = exc.theta if exc.theta is not None else math.nan
        return ("degenerate", theta, math.nan, math.nan, math.nan, True)
    except WinprobError:
        return ("failed", math.nan, math.nan, math.nan, math.nan, True)
    if estimate.degenerate:
        return ("degenerate", estimate.theta, math.nan, math.nan, math.nan, converged)
    return (
        "ok",
        estimate.theta,
        estimate.ci_low,
        estimate.ci_high,
        estimate.p_value,
        converged,
    )


def resolve_thread_count(threads: Optional[int] = None) -> int:
    """Thread cap: explicit argument, else WINPROB_THREADS (0 or unset = auto)."""
    if threads is None:
        raw = os.environ.get("WINPROB_THREADS", "").strip()
        if raw:
            try:
                threads = int(raw)
            except ValueError as exc:
                raise ConfigurationError(
                    f"WINPROB_THREADS must be an integer, got {raw!r}"
                ) from exc
        else:
            threads = 0
    if threads < 0:
        raise ConfigurationError(f"thread count must be nonnegative, got {threads}")
    if threads == 0:
        return max(1, os.cpu_count() or 1)
    return threads


def run_study(
    scenario: Scenario,
    method: str,
    n_reps: int,
    master_seed: int,
    *,
    alpha: float = 0.05,
    baseline_covariate: bool = True,
    threads: Optional[int] = None,
) -> SimulationReport:
    """Estimate the landmark win probability over ``n_reps`` replicates.

    Hard estimator errors (for example an empty arm at the landmark) are
    counted as failed replicates and excluded; degenerate point estimates
    contribute to the bias summaries but not to interval metrics;
    non-converged repeated-measures fits are included with their returned
    estimates and counted.
    """
    if method not in _METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {_METHODS}")
    if n_reps < 1:
        raise ConfigurationError("n_reps must be at least 1")

    results: list = [None] * n_reps

    def work(k: int) -> None:
        results[k] = _one_replicate(
            scenario, method, master_seed, k, alpha, baseline_covariate
        )

    n_threads = resolve_thread_count(threads)
    if n_threads <= 1 or n_reps == 1:
        for k in range(n_reps):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(n_reps)))

    status = np.array([r[0] for r in results])
    thetas = np.array([r[1] for r in results])
    lows = np.array([r[2] for r in results])
    highs = np.array([r[3] for r in results])
    pvals = np.array([r[4] for r in results])
    conv = np.array([r[5] for r in results])

    usable = status != "failed"
    ok = status == "ok"
    n_failed = int(np.sum(~usable))
    n_degenerate = int(np.sum(status == "degenerate"))
    n_nonconverged = int(np.sum(usable & ~conv))

    theta0 = true_theta(scenario)
    used_thetas = thetas[usable]
    if used_thetas.size == 0:
        raise ConfigurationError("every replicate failed; nothing to aggregate")
    mean_theta = float(np.mean(used_thetas))
    rel_bias = float(np.mean((used_thetas - theta0) / theta0) * 100.0)
    spread = float(np.std(used_thetas, ddof=1)) if used_thetas.size > 1 else math.nan
    std_bias = (
        float(np.mean(used_thetas - theta0) / spread * 100.0)
        if spread and math.isfinite(spread) and spread > 0
        else math.nan
    )

    n_ok = int(np.sum(ok))
    if n_ok:
        covered = np.sum((lows[ok] <= theta0) & (theta0 <= highs[ok]))
        ml = np.sum(highs[ok] < theta0)
        mr = np.sum(lows[ok] > theta0)
        coverage_pct = float(covered / n_ok * 100.0)
        ml_pct = float(ml / n_ok * 100.0)
        mr_pct = float(mr / n_ok * 100.0)
        mean_width = float(np.mean(highs[ok] - lows[ok]))
        power_pct = float(np.sum(pvals[ok] < alpha) / n_ok * 100.0)
    else:
        coverage_pct = ml_pct = mr_pct = mean_width = power_pct = math.nan

    return SimulationReport(
        scenario=scenario,
        method=method,
        n_reps=n_reps,
        seed=master_seed,
        true_theta=theta0,
        n_failed=n_failed,
        n_degenerate=n_degenerate,
        n_nonconverged=n_nonconverged,
        mean_theta=mean_theta,
        rel_bias_pct=rel_bias,
        std_bias_pct=std_bias,
        coverage_pct=coverage_pct,
        ml_pct=ml_pct,
        mr_pct=mr_pct,
        mean_width=mean_width,
        power_pct=power_pct,
    )


def scenario_registry(n0: int = 50, n1: int = 50) -> list[Scenario]:
    """The built-in study grid: 4 completely-random cells plus 32 trigger cells."""
    scenarios = [Scenario(t, "mcar", None, n0, n1) for t in (1, 2, 3, 4)]
    for mechanism in ("mar", "mnar"):
        for case in range(1, 17):
            trajectory = (case - 1) // 4 + 1
            combo = (case - 1) % 4 + 1
            scenarios.append(Scenario(trajectory, mechanism, combo, n0, n1))
    return scenarios


def landmark_dropout_percentages(
    scenario: Scenario, master_seed: int, replicate: int = 0
) -> tuple[float, float]:
    """Percent of subjects per arm missing the landmark after one deletion pass."""
    data = generate_complete(scenario, _stream(master_seed, replicate, _TAG_GENERATE))
    data = _apply_mechanism(scenario, data, _stream(master_seed, replicate, _TAG_DELETE))
    landmark = data.landmark
    pct = []
    for arm in (0, 1):
        subjects = data.arm_subjects(arm)
        missing = sum(1 for s in subjects if s.outcomes[landmark] is None)
        pct.append(100.0 * missing / len(subjects))
    return pct[0], pct[1]


def format_report_table(reports: list[SimulationReport]) -> str:
    """Aligned-column text table: one row per report, tail/coverage/width/power."""
    header = (
        f"{'scenario':<28} {'method':<6} {'reps':>5} {'bias%':>8} {'sbias%':>8} "
        f"{'ML':>5} {'CV':>6} {'MR':>5} {'WDx100':>7} {'EP':>6} {'fail':>4} {'nc':>3}"
    )
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.scenario.label():<28} {r.method:<6} {r.n_reps:>5} "
            f"{r.rel_bias_pct:>8.1f} {r.std_bias_pct:>8.1f} "
            f"{r.ml_pct:>5.1f} {r.coverage_pct:>6.1f} {r.mr_pct:>5.1f} "
            f"{r.mean_width * 100.0:>7.1f} {r.power_pct:>6.1f} "
            f"{r.n_failed:>4d} {r.n_nonconverged:>3d}"
        )
    return "\n".join(lines) + "\n"
