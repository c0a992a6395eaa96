"""Repeated-measures GLS fitter: design assembly, REML internals, contrasts."""

import numpy as np
import numpy.testing as npt
import pytest

from winprob.errors import ContrastShapeError, InsufficientData, SingularDesign
from winprob.mmrm import (
    SubjectBlock,
    build_design,
    estimate_contrast,
    fit_reml,
)
from winprob.mmrm import _chol_from_params, _params_from_chol, _RemlProblem


def random_panel(rng, n0=8, n1=9, n_t=3, missing=0.25, covariate=True):
    """Random win-fraction-like panel with scattered missingness."""
    n = n0 + n1
    arms = np.array([0] * n0 + [1] * n1)
    fractions = rng.uniform(0.05, 0.95, size=(n, n_t))
    if missing:
        mask = rng.random((n, n_t)) < missing
        # keep at least one observation per subject
        for i in range(n):
            if mask[i].all():
                mask[i, rng.integers(n_t)] = False
        fractions[mask] = np.nan
    base = rng.uniform(0.05, 0.95, size=n) if covariate else None
    return fractions, base, arms


def dense_objective(problem, phi):
    """Independent dense evaluation of the minimized objective.

    Builds every subject's design block explicitly, profiles the mean by
    generalized least squares, and assembles the objective from per-subject
    log-determinants and quadratic forms — no pattern grouping, no Kronecker
    shortcuts.
    """
    T, p = problem.T, problem.p
    d = T * (T + 1) // 2
    L0 = _chol_from_params(phi[:d], T)
    L1 = _chol_from_params(phi[d:], T)
    sigma = [L0 @ L0.T, L1 @ L1.T]

    designs, responses, v_invs = [], [], []
    logdet_sum = 0.0
    M = np.zeros((p, p))
    rhs = np.zeros(p)
    for block in problem.blocks:
        X = block.design_matrix(T)
        y = np.asarray(block.response)
        times = list(block.times)
        V = sigma[block.arm][np.ix_(times, times)]
        v_inv = np.linalg.inv(V)
        logdet_sum += float(np.log(np.linalg.det(V)))
        M += X.T @ v_inv @ X
        rhs += X.T @ v_inv @ y
        designs.append(X)
        responses.append(y)
        v_invs.append(v_inv)
    beta = np.linalg.solve(M, rhs)
    quad = 0.0
    for X, y, v_inv in zip(designs, responses, v_invs):
        r = y - X @ beta
        quad += float(r @ v_inv @ r)
    penalty = float(np.log(np.linalg.det(M))) if problem.restricted else 0.0
    return 0.5 * (logdet_sum + quad + penalty)


class TestCholParametrization:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for T in (1, 2, 4):
            L = np.tril(rng.normal(size=(T, T)))
            L[np.diag_indices(T)] = rng.uniform(0.2, 2.0, size=T)
            params = _params_from_chol(L, T)
            npt.assert_allclose(_chol_from_params(params, T), L, atol=1e-14)

    def test_param_count(self):
        T = 3
        params = _params_from_chol(np.eye(T), T)
        assert params.shape == (T * (T + 1) // 2,)
        npt.assert_allclose(params, 0.0)


class TestBuildDesign:
    def test_block_contents(self):
        fractions = np.array([[0.2, np.nan, 0.6], [0.5, 0.5, 0.5]])
        base = np.array([0.25, 0.75])
        blocks, warnings = build_design(fractions, base, np.array([0, 1]), True)
        assert warnings == []
        assert blocks[0].covariate_row == (1.0, 0.0, 0.25)
        assert blocks[0].times == (0, 2)
        assert blocks[0].response == (0.2, 0.6)
        assert blocks[1].times == (0, 1, 2)
        assert blocks[1].arm == 1

    def test_design_matrix_layout(self):
        block = SubjectBlock(covariate_row=(1.0, 1.0, 0.4), times=(0, 2), response=(0.1, 0.9), arm=1)
        X = block.design_matrix(3)
        expected = np.array(
            [
                [1, 0, 0, 1, 0, 0, 0.4, 0, 0],
                [0, 0, 1, 0, 0, 1, 0, 0, 0.4],
            ]
        )
        npt.assert_allclose(X, expected)

    def test_exclusions_reported(self):
        fractions = np.array(
            [[np.nan, np.nan], [0.3, 0.4], [0.6, 0.2], [0.5, np.nan], [0.9, 0.8]]
        )
        base = np.array([0.5, np.nan, 0.4, 0.6, 0.7])
        arms = np.array([0, 0, 0, 1, 1])
        blocks, warnings = build_design(fractions, base, arms, True)
        assert len(blocks) == 3
        assert any("no observed" in w for w in warnings)
        assert any("baseline fraction" in w for w in warnings)

    def test_without_covariate_keeps_missing_baseline_subjects(self):
        fractions = np.array([[0.3, 0.4], [0.6, 0.2]])
        blocks, warnings = build_design(fractions, None, np.array([0, 1]), False)
        assert len(blocks) == 2
        assert blocks[0].covariate_row == (1.0, 0.0)
        assert warnings == []

    def test_rejects_bad_shapes(self):
        with pytest.raises(InsufficientData):
            build_design(np.zeros(4), None, np.zeros(4, dtype=int), False)
        with pytest.raises(InsufficientData):
            build_design(np.zeros((4, 2)), np.zeros(3), np.zeros(4, dtype=int), True)


class TestGradient:
    def test_matches_central_differences(self):
        # five random instances spanning both covariance penalties and
        # mixed missingness patterns
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            n_t = int(rng.integers(2, 4))
            fractions, base, arms = random_panel(
                rng,
                n0=int(rng.integers(5, 9)),
                n1=int(rng.integers(5, 9)),
                n_t=n_t,
                covariate=bool(seed % 2),
            )
            blocks, _ = build_design(fractions, base, arms, bool(seed % 2))
            problem = _RemlProblem(blocks, n_t, restricted=bool((seed // 2) % 2 == 0))
            phi = problem.initial_parameters() + 0.05 * rng.normal(size=2 * n_t * (n_t + 1) // 2)
            f0, grad, _ = problem.evaluate(phi, need_grad=True)
            assert np.isfinite(f0) and grad is not None

            fd = np.empty_like(grad)
            for j in range(phi.size):
                h = 1e-5 * max(1.0, abs(phi[j]))
                up, dn = phi.copy(), phi.copy()
                up[j] += h
                dn[j] -= h
                fd[j] = (problem.evaluate(up, False)[0] - problem.evaluate(dn, False)[0]) / (2 * h)
            scale = max(float(np.max(np.abs(grad))), 1e-8)
            rel_err = float(np.max(np.abs(fd - grad))) / scale
            assert rel_err < 1e-5, f"instance {seed}: gradient mismatch {rel_err:.2e}"

    def test_guard_rejects_wild_parameters(self):
        rng = np.random.default_rng(1)
        fractions, base, arms = random_panel(rng, covariate=False)
        blocks, _ = build_design(fractions, None, arms, False)
        problem = _RemlProblem(blocks, 3, restricted=True)
        bad = np.full(12, 100.0)
        obj, grad, state = problem.evaluate(bad, need_grad=True)
        assert obj == np.inf and grad is None and state is None


class TestDenseAgreement:
    @pytest.mark.parametrize("restricted", [True, False])
    @pytest.mark.parametrize("covariate", [True, False])
    def test_grouped_evaluation_matches_dense(self, restricted, covariate):
        rng = np.random.default_rng(42)
        fractions, base, arms = random_panel(rng, n0=10, n1=11, covariate=covariate)
        blocks, _ = build_design(fractions, base, arms, covariate)
        problem = _RemlProblem(blocks, 3, restricted=restricted)
        for jitter in range(3):
            phi = problem.initial_parameters() + 0.1 * jitter * np.sin(
                np.arange(12, dtype=float) + jitter
            )
            fast = problem.evaluate(phi, need_grad=False)[0]
            slow = dense_objective(problem, phi)
            npt.assert_allclose(fast, slow, rtol=1e-10)


class TestCompleteDataClosedForm:
    """With nothing missing and saturated arm-by-time means, the covariance
    estimates have textbook closed forms: centered second moments divided by
    (n - 1) under the restricted criterion and by n under plain likelihood."""

    def setup_method(self):
        rng = np.random.default_rng(7)
        self.n0, self.n1, T = 40, 50, 3
        root = rng.normal(size=(T, T)) / 2 + np.eye(T)
        self.y0 = rng.normal(size=(self.n0, T)) @ root.T
        self.y1 = 0.3 + rng.normal(size=(self.n1, T)) @ root.T * 1.4
        fractions = np.vstack([self.y0, self.y1])
        arms = np.array([0] * self.n0 + [1] * self.n1)
        self.blocks, _ = build_design(fractions, None, arms, False)

    def test_reml_recovers_ddof1_covariances(self):
        fit = fit_reml(self.blocks, 3)
        assert fit.converged
        npt.assert_allclose(fit.sigma0, np.cov(self.y0.T, ddof=1), rtol=2e-5, atol=1e-7)
        npt.assert_allclose(fit.sigma1, np.cov(self.y1.T, ddof=1), rtol=2e-5, atol=1e-7)

    def test_ml_recovers_ddof0_covariances(self):
        fit = fit_reml(self.blocks, 3, restricted=False)
        assert fit.converged
        npt.assert_allclose(fit.sigma0, np.cov(self.y0.T, ddof=0), rtol=2e-5, atol=1e-7)
        npt.assert_allclose(fit.sigma1, np.cov(self.y1.T, ddof=0), rtol=2e-5, atol=1e-7)

    def test_beta_is_group_means_and_se_matches(self):
        fit = fit_reml(self.blocks, 3)
        m0 = self.y0.mean(axis=0)
        m1 = self.y1.mean(axis=0)
        npt.assert_allclose(fit.beta[:3], m0, rtol=1e-8)
        npt.assert_allclose(fit.beta[3:], m1 - m0, rtol=1e-8)
        for t in range(3):
            est, se = estimate_contrast(fit, fit.treatment_contrast(t))
            npt.assert_allclose(est, m1[t] - m0[t], rtol=1e-8)
            expected = np.sqrt(
                np.cov(self.y0[:, t], ddof=1) / self.n0 + np.cov(self.y1[:, t], ddof=1) / self.n1
            )
            npt.assert_allclose(se, expected, rtol=2e-5)

    def test_objective_path_non_increasing(self):
        fit = fit_reml(self.blocks, 3)
        path = np.array(fit.objective_path)
        assert np.all(np.diff(path) <= 1e-12)

    def test_iteration_cap_flags_nonconvergence(self):
        fit = fit_reml(self.blocks, 3, max_iter=1, initial_covariances=(np.eye(3), np.eye(3)))
        assert fit.iterations == 1
        assert not fit.converged


class TestContrasts:
    def setup_method(self):
        rng = np.random.default_rng(3)
        fractions, base, arms = random_panel(rng, n0=12, n1=12, missing=0.0)
        blocks, _ = build_design(fractions, base, arms, True)
        self.fit = fit_reml(blocks, 3)

    def test_treatment_contrast_layout(self):
        c = self.fit.treatment_contrast(1)
        assert c.shape == (9,)
        assert c[4] == 1.0 and np.sum(c != 0.0) == 1

    def test_timepoint_bounds(self):
        with pytest.raises(ContrastShapeError):
            self.fit.treatment_contrast(3)
        with pytest.raises(ContrastShapeError):
            self.fit.treatment_contrast(-1)

    def test_contrast_validation(self):
        with pytest.raises(ContrastShapeError):
            estimate_contrast(self.fit, np.zeros(4))
        with pytest.raises(ContrastShapeError):
            estimate_contrast(self.fit, np.zeros(9))
        bad = np.zeros(9)
        bad[0] = np.nan
        with pytest.raises(ContrastShapeError):
            estimate_contrast(self.fit, bad)

    def test_linear_combination(self):
        c = np.zeros(9)
        c[3:6] = 1.0 / 3.0  # average arm effect across timepoints
        est, se = estimate_contrast(self.fit, c)
        npt.assert_allclose(est, np.mean(self.fit.beta[3:6]), rtol=1e-12)
        assert se > 0.0


class TestDegenerateInputs:
    def test_too_few_subjects(self):
        fractions = np.array([[0.4, 0.5], [0.6, 0.7], [0.5, 0.5]])
        arms = np.array([0, 1, 1])
        blocks, _ = build_design(fractions, None, arms, False)
        with pytest.raises(InsufficientData):
            fit_reml(blocks, 2)

    def test_no_blocks(self):
        with pytest.raises(InsufficientData):
            fit_reml([], 2)

    def test_collinear_covariate_is_singular(self):
        rng = np.random.default_rng(5)
        fractions, _, arms = random_panel(rng, missing=0.0)
        blocks, _ = build_design(fractions, arms.astype(float), arms, True)
        with pytest.raises(SingularDesign):
            fit_reml(blocks, 3)

    def test_timepoint_outside_range(self):
        block = SubjectBlock((1.0, 0.0), (5,), (0.5,), 0)
        good0 = SubjectBlock((1.0, 0.0), (0, 1), (0.4, 0.5), 0)
        good1 = SubjectBlock((1.0, 1.0), (0, 1), (0.6, 0.5), 1)
        good2 = SubjectBlock((1.0, 1.0), (0, 1), (0.7, 0.4), 1)
        with pytest.raises(InsufficientData):
            fit_reml([block, good0, good1, good2], 2)

    def test_inconsistent_covariate_rows(self):
        a = SubjectBlock((1.0, 0.0), (0,), (0.5,), 0)
        b = SubjectBlock((1.0, 0.0, 0.3), (0,), (0.5,), 0)
        c = SubjectBlock((1.0, 1.0), (0,), (0.6,), 1)
        d = SubjectBlock((1.0, 1.0), (0,), (0.7,), 1)
        with pytest.raises(InsufficientData):
            fit_reml([a, b, c, d], 1)


class TestMissingPatternFactorization:
    def test_fit_invariant_to_subject_order(self):
        rng = np.random.default_rng(9)
        fractions, base, arms = random_panel(rng, n0=9, n1=10, missing=0.3)
        blocks, _ = build_design(fractions, base, arms, True)
        fit_a = fit_reml(blocks, 3)
        order = rng.permutation(len(blocks))
        fit_b = fit_reml([blocks[i] for i in order], 3)
        npt.assert_allclose(fit_a.beta, fit_b.beta, rtol=1e-7)
        npt.assert_allclose(fit_a.sigma0, fit_b.sigma0, rtol=1e-6, atol=1e-10)
        npt.assert_allclose(fit_a.loglik, fit_b.loglik, rtol=1e-9)

    def test_monotone_dropout_uses_partial_subjects(self):
        # a fit on monotone-missing data must differ from the complete-case fit
        rng = np.random.default_rng(11)
        fractions, base, arms = random_panel(rng, n0=15, n1=15, missing=0.0)
        drop = rng.random(30) < 0.4
        fractions_mono = fractions.copy()
        fractions_mono[drop, 2] = np.nan
        blocks_all, _ = build_design(fractions_mono, base, arms, True)
        blocks_cc, _ = build_design(fractions[~drop], base[~drop], arms[~drop], True)
        fit_all = fit_reml(blocks_all, 3)
        fit_cc = fit_reml(blocks_cc, 3)
        assert sum(fit_all.n_subjects) == 30
        assert sum(fit_cc.n_subjects) == int(np.sum(~drop))
        assert not np.allclose(fit_all.beta, fit_cc.beta, atol=1e-6)
