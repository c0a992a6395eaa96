"""Exception types shared across the package.

Each class carries the process exit code the command-line layer maps it to:
2 for problems with the input (bad files, impossible requests) and 3 for
numerical failures discovered during estimation.
"""

INPUT_ERROR_EXIT = 2
NUMERICAL_ERROR_EXIT = 3


class WinprobError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = INPUT_ERROR_EXIT


class InputError(WinprobError):
    """Malformed or unreadable user input (CSV contents, bad options)."""


class ConfigurationError(WinprobError):
    """A request that cannot be satisfied as stated (impossible rates, bad parameters)."""


class EmptyArm(WinprobError):
    """No observed outcomes in one arm at a required timepoint."""


class InsufficientData(WinprobError):
    """Too few observations to carry out the requested computation."""


class SingularDesign(WinprobError):
    """Design matrix is rank deficient."""

    exit_code = NUMERICAL_ERROR_EXIT


class LeverageError(WinprobError):
    """A leverage at (or numerically at) 1 makes the variance correction undefined."""

    exit_code = NUMERICAL_ERROR_EXIT


class NumericalFailure(WinprobError):
    """Optimization or linear algebra produced non-finite values."""

    exit_code = NUMERICAL_ERROR_EXIT


class ContrastShapeError(WinprobError):
    """Contrast vector does not match the fitted coefficient layout."""


class DegenerateInference(WinprobError):
    """The point estimate or its variance leaves no room for logit-scale inference.

    Raised when the estimate sits on the boundary (0 or 1) or the standard
    error is exactly zero.  Carries the offending point estimate so callers
    can still report the raw value without an interval.
    """

    exit_code = NUMERICAL_ERROR_EXIT

    def __init__(self, message: str, theta: float | None = None):
        super().__init__(message)
        self.theta = theta
