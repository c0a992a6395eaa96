"""Wide-format CSV ingestion, analysis orchestration, and result serialization.

The canonical input is one row per subject: an id column, an arm column
(0/1), optionally a baseline column, and one column per post-baseline
timepoint.  Fields may be comma- or whitespace-separated (sniffed from the
header).  Cells equal to one of the missing tokens — empty, ``NA``, or ``.``
— are treated as missing, which accepts statistical-package listings
verbatim.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from ._version import __version__
from .data import Direction, Subject, TrialData
from .errors import DegenerateInference, InputError
from .inference import EffectConversions, WinPEstimate, convert_effects
from .methods import cca_analysis, gpc_analysis, mmrm_analysis

__all__ = [
    "INFER_BASELINE",
    "ReadOptions",
    "read_wide_csv",
    "file_digest",
    "AnalysisResult",
    "analyze",
    "write_result",
]

# Default marker: treat the first measurement column as the baseline.
INFER_BASELINE = "__infer__"

MISSING_TOKENS = ("", "NA", ".")


@dataclass(frozen=True)
class ReadOptions:
    """Column mapping and parsing rules for :func:`read_wide_csv`.

    With the defaults, every column other than ``id_column`` and
    ``arm_column`` is a measurement, the first of them being the baseline.
    Set ``baseline_column`` to a name to pick it explicitly, or to ``None``
    for a trial without baseline scores.
    """

    id_column: str = "id"
    arm_column: str = "trt"
    baseline_column: Optional[str] = INFER_BASELINE
    outcome_columns: Optional[tuple[str, ...]] = None
    direction: Direction = Direction.HIGHER_WINS
    missing_tokens: tuple[str, ...] = MISSING_TOKENS
    delimiter: Optional[str] = None  # None: comma if the header has one, else whitespace


def _split_rows(text: str, delimiter: Optional[str]) -> list[tuple[int, list[str]]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if delimiter is None:
            fields = line.split()
        else:
            fields = [f.strip() for f in line.split(delimiter)]
        rows.append((lineno, fields))
    return rows


def _parse_cell(
    token: str, lineno: int, column: str, missing_tokens: tuple[str, ...]
) -> Optional[float]:
    if token in missing_tokens:
        return None
    try:
        value = float(token)
    except ValueError:
        raise InputError(
            f"row {lineno}, column {column!r}: cannot parse {token!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise InputError(f"row {lineno}, column {column!r}: non-finite value {token!r}")
    return value


def read_wide_csv(path: Union[str, Path], options: Optional[ReadOptions] = None) -> TrialData:
    """Parse a wide-format trial file into :class:`TrialData`.

    Raises :class:`InputError` with a row/column location for unparseable
    cells, and for missing required columns or duplicate subject ids.
    """
    opts = options or ReadOptions()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc

    delimiter = opts.delimiter
    first_line = next((ln for ln in text.splitlines() if ln.strip()), "")
    if delimiter is None and "," in first_line:
        delimiter = ","
    rows = _split_rows(text, delimiter)
    if not rows:
        raise InputError(f"{path}: empty input, expected a header row")

    _, header = rows[0]
    positions = {name: i for i, name in enumerate(header)}
    if len(positions) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    for required in (opts.id_column, opts.arm_column):
        if required not in positions:
            raise InputError(f"{path}: missing required column {required!r}")

    if opts.outcome_columns is not None:
        outcome_names = list(opts.outcome_columns)
        baseline_name = (
            None if opts.baseline_column == INFER_BASELINE else opts.baseline_column
        )
    else:
        reserved = {opts.id_column, opts.arm_column}
        if opts.baseline_column not in (None, INFER_BASELINE):
            reserved.add(opts.baseline_column)
        measured = [name for name in header if name not in reserved]
        if opts.baseline_column == INFER_BASELINE:
            if len(measured) < 2:
                raise InputError(
                    f"{path}: need at least a baseline and one outcome column, "
                    f"found measurement columns {measured!r}"
                )
            baseline_name, outcome_names = measured[0], measured[1:]
        else:
            baseline_name, outcome_names = opts.baseline_column, measured
    if not outcome_names:
        raise InputError(f"{path}: no outcome columns")
    for name in outcome_names + ([baseline_name] if baseline_name else []):
        if name not in positions:
            raise InputError(f"{path}: missing required column {name!r}")

    subjects = []
    for lineno, fields in rows[1:]:
        if len(fields) != len(header):
            raise InputError(
                f"{path}: row {lineno}: expected {len(header)} fields, found {len(fields)}"
            )
        subject_id = fields[positions[opts.id_column]]
        if subject_id in opts.missing_tokens:
            raise InputError(f"row {lineno}, column {opts.id_column!r}: missing id")
        arm_value = _parse_cell(
            fields[positions[opts.arm_column]], lineno, opts.arm_column, ()
        )
        if arm_value not in (0.0, 1.0):
            raise InputError(
                f"row {lineno}, column {opts.arm_column!r}: arm must be 0 or 1, "
                f"got {fields[positions[opts.arm_column]]!r}"
            )
        baseline = (
            _parse_cell(fields[positions[baseline_name]], lineno, baseline_name, opts.missing_tokens)
            if baseline_name
            else None
        )
        outcomes = tuple(
            _parse_cell(fields[positions[name]], lineno, name, opts.missing_tokens)
            for name in outcome_names
        )
        subjects.append(Subject(subject_id, int(arm_value), baseline, outcomes))

    return TrialData(tuple(subjects), opts.direction, tuple(outcome_names))


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of the input file, byte-exact."""
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class AnalysisResult:
    """One method's estimates plus everything a report needs to stand alone."""

    method: str
    direction: Direction
    estimates: tuple[WinPEstimate, ...]
    timepoint_labels: tuple[str, ...]
    conversions: Optional[EffectConversions]
    warnings: tuple[str, ...]
    metadata: dict


def analyze(
    data: TrialData,
    method: str,
    alpha: float = 0.05,
    baseline_covariate: bool = True,
    input_digest: Optional[str] = None,
) -> AnalysisResult:
    """Run one estimation method over the trial and package the result."""
    extra: dict = {}
    if method == "gpc":
        output = gpc_analysis(data, alpha, baseline_covariate)
        labels = (data.timepoint_labels[data.landmark],)
    elif method == "cca":
        output = cca_analysis(data, alpha, baseline_covariate)
        labels = (data.timepoint_labels[data.landmark],)
    elif method == "mmrm":
        output, fit = mmrm_analysis(data, alpha, baseline_covariate)
        labels = tuple(data.timepoint_labels)
        extra = {"converged": fit.converged, "iterations": fit.iterations}
    else:
        raise InputError(f"unknown method {method!r}; expected 'gpc', 'cca', or 'mmrm'")

    warnings = list(output.warnings)
    landmark = output.landmark
    try:
        conversions = convert_effects(landmark.theta)
    except DegenerateInference as exc:
        conversions = None
        warnings.append(f"effect conversions unavailable: {exc}")

    metadata = {
        "version": __version__,
        "direction": data.direction.value,
        "n_arm0": len(data.arm_subjects(0)),
        "n_arm1": len(data.arm_subjects(1)),
        "observed_arm0": list(data.observed_counts(0)),
        "observed_arm1": list(data.observed_counts(1)),
        "alpha": alpha,
        "baseline_covariate": baseline_covariate,
        "input_digest": input_digest,
    }
    metadata.update(extra)

    return AnalysisResult(
        method=method,
        direction=data.direction,
        estimates=tuple(output.estimates),
        timepoint_labels=labels,
        conversions=conversions,
        warnings=tuple(warnings),
        metadata=metadata,
    )


def result_payload(result: AnalysisResult) -> dict:
    """JSON-ready dictionary with a fixed key order."""
    timepoints = []
    for label, est in zip(result.timepoint_labels, result.estimates):
        timepoints.append(
            {
                "label": label,
                "theta": est.theta,
                "se": est.std_error,
                "ci_low": est.ci_low,
                "ci_high": est.ci_high,
                "p_value": est.p_value,
            }
        )
    conversions = None
    if result.conversions is not None:
        conversions = {
            "net_benefit": result.conversions.net_benefit,
            "win_odds": result.conversions.win_odds,
            "smd": result.conversions.smd_equivalent,
        }
    return {
        "method": result.method,
        "direction": result.direction.value,
        "timepoints": timepoints,
        "conversions": conversions,
        "warnings": list(result.warnings),
        "metadata": result.metadata,
    }


def _format_p(p: Optional[float]) -> str:
    return "NA" if p is None else f"{p:.4f}"


def format_table(result: AnalysisResult, header: bool = True) -> str:
    """Aligned text rows: one per timepoint, estimate with CI and p-value."""
    level = f"{(1.0 - result.estimates[0].alpha) * 100.0:g}%"
    lines = []
    if header:
        lines.append(f"{'method':<6} {'timepoint':<12} estimate ({level} CI) and p-value")
        lines.append("-" * 58)
    for label, est in zip(result.timepoint_labels, result.estimates):
        if est.degenerate:
            body = f"{est.theta:.3f} (NA, NA) p=NA"
        else:
            body = (
                f"{est.theta:.3f} ({est.ci_low:.3f}, {est.ci_high:.3f}) "
                f"p={_format_p(est.p_value)}"
            )
        lines.append(f"{result.method:<6} {label:<12} {body}")
    if result.conversions is not None:
        c = result.conversions
        lines.append(
            f"{'':<6} {'landmark':<12} NB={c.net_benefit:.3f} WO={c.win_odds:.3f} "
            f"SMD={c.smd_equivalent:.3f}"
        )
    return "\n".join(lines) + "\n"


def write_result(result: AnalysisResult, format: str = "json") -> bytes:
    """Serialize an analysis result to bytes (UTF-8 JSON or an aligned table)."""
    if format == "json":
        return (json.dumps(result_payload(result), indent=2) + "\n").encode("utf-8")
    if format == "table":
        return format_table(result).encode("utf-8")
    raise InputError(f"unknown output format {format!r}; expected 'json' or 'table'")
