"""Ordinary least squares with a leverage-corrected sandwich variance.

The designs fitted here are tiny (two or three well-scaled columns), so the
normal equations are solved through a Cholesky factorization with an explicit
rank check instead of anything fancier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InsufficientData, LeverageError, SingularDesign

RANK_TOLERANCE = 1e-10
_LEVERAGE_CEILING = 1.0 - 1e-12


@dataclass(frozen=True)
class OlsFit:
    beta: np.ndarray
    residuals: np.ndarray
    leverages: np.ndarray
    xtx_inverse: np.ndarray


def fit_ols(design: np.ndarray, response: np.ndarray) -> OlsFit:
    """Least-squares fit returning coefficients, residuals, and leverages.

    Raises ``SingularDesign`` when the Gram matrix is rank deficient at a
    relative tolerance of 1e-10 of its largest diagonal entry, and
    ``InsufficientData`` when there are no more rows than columns.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2:
        raise SingularDesign("design must be a 2-d matrix")
    n, p = x.shape
    if y.shape != (n,):
        raise SingularDesign(f"response length {y.shape} does not match {n} design rows")
    if n <= p:
        raise InsufficientData(f"need more rows than columns, got {n} rows for {p} columns")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SingularDesign("design and response must be finite")

    xtx = x.T @ x
    tol = RANK_TOLERANCE * float(np.max(np.diag(xtx)))
    try:
        chol = linalg.cholesky(xtx, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularDesign(f"design is rank deficient: {exc}") from exc
    if float(np.min(np.diag(chol)) ** 2) <= tol:
        raise SingularDesign("design is numerically rank deficient")

    beta = linalg.cho_solve((chol, True), x.T @ y)
    xtx_inverse = linalg.cho_solve((chol, True), np.eye(p))
    leverages = np.einsum("ij,jk,ik->i", x, xtx_inverse, x)
    return OlsFit(
        beta=beta,
        residuals=y - x @ beta,
        leverages=leverages,
        xtx_inverse=xtx_inverse,
    )


def sandwich_vcov(fit: OlsFit, design: np.ndarray) -> np.ndarray:
    """Heteroscedasticity-robust covariance with the 1/(1 - leverage) correction.

    For the intercept-plus-treatment design the (treatment, treatment) entry
    reduces exactly to the sum over arms of squared residuals divided by
    n(n - 1), which is what the win-fraction estimators rely on.
    """
    x = np.asarray(design, dtype=float)
    h = fit.leverages
    if np.any(h >= _LEVERAGE_CEILING):
        raise LeverageError(
            "a leverage of 1 (duplicate-saturated design) makes the correction undefined"
        )
    weights = fit.residuals**2 / (1.0 - h)
    meat = x.T @ (x * weights[:, None])
    vcov = fit.xtx_inverse @ meat @ fit.xtx_inverse
    return (vcov + vcov.T) / 2.0
