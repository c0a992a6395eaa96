"""Repeated-measures generalized least squares for win fractions, fit by REML.

Each subject contributes one row per observed post-baseline timepoint.  The
mean is an arm-by-timepoint profile plus, optionally, a baseline-fraction
slope per timepoint; within-subject residuals follow an unstructured
covariance matrix specific to the subject's arm.  Missing timepoints are
handled by dropping the corresponding rows of the subject's design block.

Estimation maximizes the restricted likelihood with the mean coefficients
profiled out by generalized least squares at every step.  The two covariance
matrices are parametrized through their Cholesky factors (log diagonal, free
sub-diagonal), so positive definiteness holds by construction, and the
quasi-Newton loop uses an analytic gradient with a backtracking line search,
which makes every accepted iterate improve the objective.

Subjects sharing an arm and an observation pattern share every matrix
factorization.  With the covariate row c_i and the pattern selector S, a
subject's design block is the Kronecker product of c_i with the identity,
restricted to observed rows; its normal-equation contribution factors as
(c_i c_i') x (S' V^-1 S), so whole patterns are absorbed with one small
solve each.  This keeps simulation-scale fitting fast without changing any
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    ContrastShapeError,
    InsufficientData,
    NumericalFailure,
    SingularDesign,
)

__all__ = [
    "SubjectBlock",
    "MmrmFit",
    "build_design",
    "fit_reml",
    "estimate_contrast",
]

_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 60
_RANK_TOLERANCE = 1e-10
_PARAM_GUARD = 60.0


@dataclass(frozen=True)
class SubjectBlock:
    """Design information for one subject.

    ``covariate_row`` is ``(1, arm)`` or ``(1, arm, baseline_fraction)``;
    ``times`` lists the observed post-baseline timepoint indices and
    ``response`` the matching win fractions.
    """

    covariate_row: tuple[float, ...]
    times: tuple[int, ...]
    response: tuple[float, ...]
    arm: int

    def design_matrix(self, n_timepoints: int) -> np.ndarray:
        """Rows of kron(covariate_row, identity) kept for observed timepoints.

        Column blocks are ordered: per-timepoint intercepts, per-timepoint
        arm effects, then (if present) per-timepoint baseline slopes.
        """
        full = np.kron(np.asarray(self.covariate_row, dtype=float), np.eye(n_timepoints))
        return full[list(self.times), :]


def build_design(
    fractions,
    baseline_fractions,
    arms,
    include_baseline_covariate: bool = True,
) -> tuple[list[SubjectBlock], list[str]]:
    """Assemble per-subject design blocks from a win-fraction panel.

    ``fractions`` is an (n_subjects, n_timepoints) array with ``nan`` marking
    missing values.  Subjects with no observed post-baseline fraction, or
    missing the baseline fraction when the covariate model asks for it, are
    excluded and reported through the returned warning list.
    """
    frac = np.asarray(fractions, dtype=float)
    if frac.ndim != 2:
        raise InsufficientData("fractions must be a 2-d (subjects x timepoints) array")
    n = frac.shape[0]
    arm_vec = np.asarray(arms, dtype=int)
    base = None
    if include_baseline_covariate:
        base = np.asarray(baseline_fractions, dtype=float)
        if base.shape != (n,):
            raise InsufficientData("baseline fractions must align with subjects")

    blocks: list[SubjectBlock] = []
    n_no_rows = 0
    n_no_baseline = 0
    for i in range(n):
        observed = np.flatnonzero(np.isfinite(frac[i]))
        if observed.size == 0:
            n_no_rows += 1
            continue
        if include_baseline_covariate:
            if not np.isfinite(base[i]):
                n_no_baseline += 1
                continue
            row = (1.0, float(arm_vec[i]), float(base[i]))
        else:
            row = (1.0, float(arm_vec[i]))
        blocks.append(
            SubjectBlock(
                covariate_row=row,
                times=tuple(int(t) for t in observed),
                response=tuple(float(v) for v in frac[i, observed]),
                arm=int(arm_vec[i]),
            )
        )
    warnings: list[str] = []
    if n_no_rows:
        warnings.append(
            f"excluded {n_no_rows} subject(s) with no observed post-baseline fractions"
        )
    if n_no_baseline:
        warnings.append(
            f"excluded {n_no_baseline} subject(s) missing the baseline fraction "
            "required by the covariate model"
        )
    return blocks, warnings


@dataclass(frozen=True)
class MmrmFit:
    """Converged (or best-effort) fit of the repeated-measures model.

    ``beta`` is laid out as per-timepoint intercepts, then per-timepoint arm
    effects, then per-timepoint baseline slopes when the covariate is in the
    model.  ``objective_path`` records the minimized objective at every
    accepted iterate (non-increasing by construction).
    """

    beta: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray
    beta_vcov: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    objective_path: tuple[float, ...]
    n_timepoints: int
    n_covariates: int
    n_subjects: tuple[int, int]
    restricted: bool

    def treatment_contrast(self, timepoint: int) -> np.ndarray:
        """Coefficient vector selecting the arm effect at ``timepoint``."""
        T = self.n_timepoints
        if not 0 <= timepoint < T:
            raise ContrastShapeError(f"timepoint {timepoint} outside 0..{T - 1}")
        c = np.zeros(self.n_covariates * T)
        c[T + timepoint] = 1.0
        return c


def _chol_from_params(params: np.ndarray, T: int) -> np.ndarray:
    L = np.zeros((T, T))
    L[np.diag_indices(T)] = np.exp(params[:T])
    rows, cols = np.tril_indices(T, k=-1)
    L[rows, cols] = params[T:]
    return L


def _params_from_chol(L: np.ndarray, T: int) -> np.ndarray:
    rows, cols = np.tril_indices(T, k=-1)
    return np.concatenate([np.log(np.diag(L)), L[rows, cols]])


class _Group:
    """All subjects sharing an arm and an observation pattern."""

    __slots__ = ("arm", "times", "C", "Y", "A", "m", "ix", "rhs_index")

    def __init__(self, arm: int, times: tuple[int, ...], C: np.ndarray, Y: np.ndarray, q: int, T: int):
        self.arm = arm
        self.times = np.asarray(times, dtype=int)
        self.C = C
        self.Y = Y
        self.A = C.T @ C
        self.m = C.shape[0]
        self.ix = np.ix_(self.times, self.times)
        self.rhs_index = np.concatenate([r * T + self.times for r in range(q)])


class _RemlProblem:
    def __init__(self, blocks: list[SubjectBlock], n_timepoints: int, restricted: bool):
        if not blocks:
            raise InsufficientData("no usable subjects for the repeated-measures fit")
        q = len(blocks[0].covariate_row)
        if any(len(b.covariate_row) != q for b in blocks):
            raise InsufficientData("inconsistent covariate rows across subjects")
        T = n_timepoints
        self.T, self.q, self.p = T, q, q * T
        self.restricted = restricted
        self.blocks = blocks

        by_pattern: dict[tuple[int, tuple[int, ...]], list[SubjectBlock]] = {}
        for b in blocks:
            if any(t < 0 or t >= T for t in b.times):
                raise InsufficientData("observed timepoint outside the declared range")
            by_pattern.setdefault((b.arm, b.times), []).append(b)
        self.groups = [
            _Group(
                arm=arm,
                times=times,
                C=np.array([b.covariate_row for b in members], dtype=float),
                Y=np.array([b.response for b in members], dtype=float),
                q=q,
                T=T,
            )
            for (arm, times), members in sorted(by_pattern.items())
        ]

        self.n_subjects = (
            sum(1 for b in blocks if b.arm == 0),
            sum(1 for b in blocks if b.arm == 1),
        )
        rows0 = sum(len(b.times) for b in blocks if b.arm == 0)
        rows1 = sum(len(b.times) for b in blocks if b.arm == 1)
        if self.n_subjects[0] < 2 or self.n_subjects[1] < 2:
            raise InsufficientData(
                "the repeated-measures fit needs at least 2 subjects per arm, got "
                f"{self.n_subjects[0]} and {self.n_subjects[1]}"
            )
        if rows0 < 2 or rows1 < 2:
            raise InsufficientData("each arm must contribute at least 2 observed rows")
        self.n_rows = rows0 + rows1

        # Pooled-design rank check: with identity covariance the normal matrix
        # is exactly X'X, so positive definiteness means full column rank.
        xtx = np.zeros((self.p, self.p))
        for grp in self.groups:
            Q = np.zeros((T, T))
            Q[grp.ix] = np.eye(len(grp.times))
            xtx += np.kron(grp.A, Q)
        try:
            chol = np.linalg.cholesky(xtx)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(f"pooled design is rank deficient: {exc}") from exc
        if float(np.min(np.diag(chol)) ** 2) <= _RANK_TOLERANCE * float(np.max(np.diag(xtx))):
            raise SingularDesign("pooled design is numerically rank deficient")

    # -- starting values ---------------------------------------------------

    def initial_parameters(self, initial=None) -> np.ndarray:
        T = self.T
        if initial is not None:
            sigmas = [np.asarray(initial[0], dtype=float), np.asarray(initial[1], dtype=float)]
        else:
            sigmas = [self._pairwise_covariance(arm) for arm in (0, 1)]
        params = []
        for sigma in sigmas:
            sigma = self._floor_eigenvalues(sigma)
            params.append(_params_from_chol(np.linalg.cholesky(sigma), T))
        return np.concatenate(params)

    def _pairwise_covariance(self, arm: int) -> np.ndarray:
        """Pairwise-complete residual covariance around per-timepoint arm means."""
        T = self.T
        sums = np.zeros(T)
        counts = np.zeros(T)
        for b in self.blocks:
            if b.arm != arm:
                continue
            for t, y in zip(b.times, b.response):
                sums[t] += y
                counts[t] += 1
        means = np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.0)

        cross = np.zeros((T, T))
        pair_counts = np.zeros((T, T))
        for b in self.blocks:
            if b.arm != arm:
                continue
            times = np.asarray(b.times, dtype=int)
            resid = np.asarray(b.response, dtype=float) - means[times]
            cross[np.ix_(times, times)] += np.outer(resid, resid)
            pair_counts[np.ix_(times, times)] += 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = np.where(pair_counts >= 2, cross / np.maximum(pair_counts - 1.0, 1.0), 0.0)
        diag = np.diag(cov).copy()
        fallback = float(np.mean(diag[diag > 0])) if np.any(diag > 0) else 5e-2
        for t in range(T):
            if diag[t] <= 0:
                cov[t, t] = fallback
        return (cov + cov.T) / 2.0

    @staticmethod
    def _floor_eigenvalues(sigma: np.ndarray) -> np.ndarray:
        sigma = (sigma + sigma.T) / 2.0
        T = sigma.shape[0]
        trace = float(np.trace(sigma))
        floor = 1e-6 * max(trace / T, 1e-6)
        eigvals, eigvecs = np.linalg.eigh(sigma)
        if eigvals[0] > floor:
            return sigma
        eigvals = np.maximum(eigvals, floor)
        return (eigvecs * eigvals) @ eigvecs.T

    # -- objective and gradient --------------------------------------------

    def evaluate(self, phi: np.ndarray, need_grad: bool):
        """Return (objective, gradient-or-None, state-or-None).

        The objective is minus the profiled (restricted) log-likelihood, up
        to a constant.  ``inf`` signals a point the line search must reject.
        """
        T, q, p = self.T, self.q, self.p
        d = T * (T + 1) // 2
        if not np.all(np.isfinite(phi)) or np.max(np.abs(phi)) > _PARAM_GUARD:
            return np.inf, None, None
        L = [_chol_from_params(phi[:d], T), _chol_from_params(phi[d:], T)]
        sigma = [Lg @ Lg.T for Lg in L]

        logdet_sum = 0.0
        M = np.zeros((p, p))
        rhs = np.zeros(p)
        inverses: list[np.ndarray] = []
        for grp in self.groups:
            V = sigma[grp.arm][grp.ix]
            try:
                cv = np.linalg.cholesky(V)
            except np.linalg.LinAlgError:
                return np.inf, None, None
            k = len(grp.times)
            v_inv = linalg.cho_solve((cv, True), np.eye(k), check_finite=False)
            inverses.append(v_inv)
            logdet_sum += grp.m * 2.0 * float(np.sum(np.log(np.diag(cv))))
            U = grp.Y @ v_inv
            scattered = np.zeros((T, T))
            scattered[grp.ix] = v_inv
            M += np.kron(grp.A, scattered)
            rhs[grp.rhs_index] += (U.T @ grp.C).T.ravel()

        try:
            cm = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        if float(np.min(np.diag(cm)) ** 2) <= _RANK_TOLERANCE * float(np.max(np.diag(M))):
            return np.inf, None, None
        beta = linalg.cho_solve((cm, True), rhs, check_finite=False)
        logdet_m = 2.0 * float(np.sum(np.log(np.diag(cm))))
        B = beta.reshape(q, T)

        quad = 0.0
        residuals: list[np.ndarray] = []
        for grp, v_inv in zip(self.groups, inverses):
            mu = grp.C @ B[:, grp.times]
            R = grp.Y - mu
            residuals.append(R)
            quad += float(np.einsum("mk,kl,ml->", R, v_inv, R))

        objective = 0.5 * (logdet_sum + quad + (logdet_m if self.restricted else 0.0))
        if not math.isfinite(objective):
            return np.inf, None, None
        state = {"beta": beta, "chol_m": cm, "sigma": sigma}
        if not need_grad:
            return objective, None, state

        n4 = None
        if self.restricted:
            m_inv = linalg.cho_solve((cm, True), np.eye(p), check_finite=False)
            n4 = m_inv.reshape(q, T, q, T)
        w_acc = [np.zeros((T, T)), np.zeros((T, T))]
        u_acc = [np.zeros((T, T)), np.zeros((T, T))]
        k_acc = [np.zeros((T, T)), np.zeros((T, T))]
        for grp, v_inv, R in zip(self.groups, inverses, residuals):
            u_rows = R @ v_inv
            w_acc[grp.arm][grp.ix] += grp.m * v_inv
            u_acc[grp.arm][grp.ix] += u_rows.T @ u_rows
            if self.restricted:
                h_full = np.einsum("rs,rasb->ab", grp.A, n4)
                k_acc[grp.arm][grp.ix] += v_inv @ h_full[grp.ix] @ v_inv

        rows, cols = np.tril_indices(T, k=-1)
        grads = []
        for g in (0, 1):
            theta_mat = w_acc[g] - u_acc[g]
            if self.restricted:
                theta_mat = theta_mat - k_acc[g]
            D = theta_mat @ L[g]
            grads.append(np.concatenate([np.diag(D) * np.diag(L[g]), D[rows, cols]]))
        return objective, np.concatenate(grads), state

    def finalize(self, phi: np.ndarray):
        objective, _, state = self.evaluate(phi, need_grad=False)
        if not math.isfinite(objective) or state is None:
            raise NumericalFailure("objective is not finite at the reported solution")
        cm = state["chol_m"]
        beta_vcov = linalg.cho_solve((cm, True), np.eye(self.p), check_finite=False)
        beta_vcov = (beta_vcov + beta_vcov.T) / 2.0
        dof = self.n_rows - (self.p if self.restricted else 0)
        loglik = -objective - 0.5 * dof * math.log(2.0 * math.pi)
        return objective, state["beta"], beta_vcov, state["sigma"], loglik


def fit_reml(
    blocks,
    n_timepoints: int,
    *,
    restricted: bool = True,
    max_iter: int = 200,
    rel_tol: float = 1e-9,
    param_tol: float = 1e-8,
    initial_covariances=None,
) -> MmrmFit:
    """Fit the repeated-measures model by (restricted) maximum likelihood.

    Returns a flagged fit rather than raising when the iteration cap is hit,
    so batch callers can count non-convergences while still using the
    estimates.  ``restricted=False`` switches to plain maximum likelihood.
    """
    problem = _RemlProblem(list(blocks), n_timepoints, restricted)
    phi = problem.initial_parameters(initial_covariances)
    f, grad, _ = problem.evaluate(phi, need_grad=True)
    if not math.isfinite(f) or grad is None:
        raise NumericalFailure("objective is not finite at the starting covariances")

    dim = phi.size
    h_inv = np.eye(dim)
    path = [f]
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        direction = -h_inv @ grad
        slope = float(grad @ direction)
        if not math.isfinite(slope) or slope >= 0.0:
            h_inv = np.eye(dim)
            direction = -grad
            slope = -float(grad @ grad)
        if slope == 0.0:
            converged = True
            break

        step = 1.0
        accepted = False
        f_new = np.inf
        for _ in range(_MAX_BACKTRACKS):
            candidate = phi + step * direction
            f_new = problem.evaluate(candidate, need_grad=False)[0]
            if math.isfinite(f_new) and f_new <= f + _ARMIJO_C * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = bool(np.linalg.norm(grad, np.inf) <= 1e-6 * (1.0 + abs(f)))
            break

        phi_new = phi + step * direction
        f_new, grad_new, _ = problem.evaluate(phi_new, need_grad=True)
        if grad_new is None:
            raise NumericalFailure("gradient is not finite at an accepted iterate")
        path.append(f_new)
        s = phi_new - phi
        y = grad_new - grad
        obj_small = abs(f - f_new) < rel_tol * (1.0 + abs(f_new))
        step_small = float(np.max(np.abs(s))) < param_tol
        phi, f, grad = phi_new, f_new, grad_new
        if obj_small or step_small:
            converged = True
            break
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            rho = 1.0 / sy
            sy_outer = np.outer(s, y)
            h_inv = (
                (np.eye(dim) - rho * sy_outer) @ h_inv @ (np.eye(dim) - rho * sy_outer.T)
                + rho * np.outer(s, s)
            )

    _, beta, beta_vcov, sigma, loglik = problem.finalize(phi)
    return MmrmFit(
        beta=beta,
        sigma0=sigma[0],
        sigma1=sigma[1],
        beta_vcov=beta_vcov,
        loglik=loglik,
        iterations=iterations,
        converged=converged,
        objective_path=tuple(path),
        n_timepoints=problem.T,
        n_covariates=problem.q,
        n_subjects=problem.n_subjects,
        restricted=restricted,
    )


def estimate_contrast(fit: MmrmFit, coefficients) -> tuple[float, float]:
    """Point estimate and standard error of a linear combination of coefficients."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape != fit.beta.shape:
        raise ContrastShapeError(
            f"contrast has shape {c.shape}, coefficients have shape {fit.beta.shape}"
        )
    if not np.all(np.isfinite(c)):
        raise ContrastShapeError("contrast coefficients must be finite")
    if not np.any(c != 0.0):
        raise ContrastShapeError("contrast must have at least one nonzero coefficient")
    estimate = float(c @ fit.beta)
    variance = float(c @ fit.beta_vcov @ c)
    return estimate, math.sqrt(max(variance, 0.0))
