"""Landmark win probability estimation for two-arm longitudinal trials.

Estimate the probability that a treatment-arm subject's final-timepoint
outcome beats a control-arm subject's (ties counted half), with three
missing-data strategies — carry-forward pairwise scoring, complete-case
landmark regression, and a repeated-measures model over win fractions —
plus logit-scale inference, effect-size conversions, a Monte Carlo harness,
and a command-line interface.
"""

from ._version import __version__
from .data import Direction, Subject, TrialData
from .epds import embedded_epds
from .errors import (
    ConfigurationError,
    ContrastShapeError,
    DegenerateInference,
    EmptyArm,
    InputError,
    InsufficientData,
    LeverageError,
    NumericalFailure,
    SingularDesign,
    WinprobError,
)
from .inference import (
    EffectConversions,
    WinPEstimate,
    convert_effects,
    logit_inference,
)
from .io import (
    AnalysisResult,
    ReadOptions,
    analyze,
    file_digest,
    read_wide_csv,
    write_result,
)
from .methods import (
    GpcPanel,
    MethodOutput,
    baseline_win_fractions,
    cca_analysis,
    cca_estimate,
    gpc_analysis,
    gpc_estimate,
    gpc_score_pair,
    gpc_win_fractions,
    mmrm_analysis,
    mmrm_estimate,
    timepoint_win_fractions,
)
from .mmrm import MmrmFit, SubjectBlock, build_design, estimate_contrast, fit_reml
from .ranks import ThetaEstimate, midranks, single_timepoint_theta, two_sample_variance, win_fractions, win_score
from .simulate import (
    DeletionParams,
    Scenario,
    SimulationReport,
    apply_mar_mnar,
    apply_mcar,
    generate_complete,
    landmark_dropout_percentages,
    run_study,
    scenario_registry,
    true_theta,
)

__all__ = [
    "__version__",
    "Direction",
    "Subject",
    "TrialData",
    "embedded_epds",
    "WinprobError",
    "InputError",
    "ConfigurationError",
    "EmptyArm",
    "InsufficientData",
    "SingularDesign",
    "LeverageError",
    "NumericalFailure",
    "ContrastShapeError",
    "DegenerateInference",
    "WinPEstimate",
    "EffectConversions",
    "logit_inference",
    "convert_effects",
    "AnalysisResult",
    "ReadOptions",
    "analyze",
    "file_digest",
    "read_wide_csv",
    "write_result",
    "GpcPanel",
    "MethodOutput",
    "gpc_score_pair",
    "gpc_win_fractions",
    "baseline_win_fractions",
    "timepoint_win_fractions",
    "gpc_analysis",
    "gpc_estimate",
    "cca_analysis",
    "cca_estimate",
    "mmrm_analysis",
    "mmrm_estimate",
    "MmrmFit",
    "SubjectBlock",
    "build_design",
    "fit_reml",
    "estimate_contrast",
    "win_score",
    "midranks",
    "win_fractions",
    "two_sample_variance",
    "single_timepoint_theta",
    "ThetaEstimate",
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
]
