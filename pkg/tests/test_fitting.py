"""Weighted fits, constrained variance MLE, and the reweighted loop."""

import numpy as np
import pytest

from shapevar.designs import ClusteredDesign, IndependentDesign, cov_to_alpha
from shapevar.errors import RankDeficient
from shapevar.fitting import (
    IrwConfig,
    fit_lmm_ml,
    fit_theta_mle,
    fit_wls,
    irw_fit_clustered,
    irw_fit_independent,
)
from shapevar.likelihood import loglik_marginal_variance
from shapevar.splines import eval_basis, make_even_spec
from shapevar.variance import IndexKind, Shape, VarianceModel, VarianceTemplate

from datagen import g1, gen_clustered, gen_independent_g1
from oracles import gls_beta, grid_search_two_param, mvn_logpdf_dense, wls_normal_equations


class TestWls:
    def test_unit_weights_are_ols(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(15), rng.normal(size=15)])
        y = rng.normal(size=15)
        got = fit_wls(X, y, np.ones(15))
        expected, *_ = np.linalg.lstsq(X, y, rcond=None)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_intercept_mean(self):
        beta = fit_wls(np.ones((2, 1)), np.array([1.0, 3.0]), np.ones(2))
        np.testing.assert_allclose(beta, [2.0])

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        w = rng.uniform(0.5, 2.0, size=20)
        np.testing.assert_allclose(fit_wls(X, y, w), wls_normal_equations(X, y, w), atol=1e-9)

    def test_rank_deficient(self):
        X = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(RankDeficient):
            fit_wls(X, np.arange(5.0), np.ones(5))


class TestLmmMl:
    def fixture(self, seed=2, n_subjects=5, n_per=4, sigma_b=0.5, sigma_e=0.7):
        rng = np.random.default_rng(seed)
        ys, Xs, Zs, ts = [], [], [], []
        for _ in range(n_subjects):
            x = rng.normal(size=n_per)
            b = rng.normal() * sigma_b
            y = 1.0 + 2.0 * x + b + rng.normal(size=n_per) * sigma_e
            Xs.append(np.column_stack([np.ones(n_per), x]))
            Zs.append(np.ones((n_per, 1)))
            ts.append(np.arange(n_per, dtype=float))
            ys.append(y)
        return ClusteredDesign.from_blocks(list(range(n_subjects)), ys, Xs, Zs, ts)

    def test_no_between_variance_reduces_to_wls(self):
        design = self.fixture(seed=3, sigma_b=0.0, n_subjects=40)
        fit = fit_lmm_ml(design)
        ols = fit_wls(design.X, design.y, np.ones(design.n_obs))
        assert fit.alpha.sigma_b < 0.1
        np.testing.assert_allclose(fit.beta, ols, atol=0.02)

    def test_profile_at_zero_equals_wls(self):
        from shapevar.fitting import _SuffStatsQ1

        design = self.fixture(seed=9)
        w = np.random.default_rng(10).uniform(0.5, 2.0, size=design.n_obs)
        stats = _SuffStatsQ1(design, w)
        _, beta0, _ = stats.profile(0.0)
        np.testing.assert_allclose(
            beta0, fit_wls(design.X, design.y, w**2), atol=1e-10
        )
        np.testing.assert_allclose(stats.blups(0.0, beta0), 0.0, atol=0)

    def test_loglik_matches_marginal_likelihood(self):
        design = self.fixture()
        fit = fit_lmm_ml(design)
        vm = VarianceModel(
            Shape.CONSTANT, None, [np.sqrt(fit.sigma2)], IndexKind.MARGINAL_MEAN
        )
        direct = loglik_marginal_variance(design, fit.beta, fit.alpha, vm)
        assert abs(direct - fit.loglik) < 1e-6

    def test_beta_matches_gls_oracle(self):
        design = self.fixture(seed=4)
        w = np.random.default_rng(5).uniform(0.5, 2.0, size=design.n_obs)
        fit = fit_lmm_ml(design, w)
        Vs, Xs, ys = [], [], []
        for i in range(design.n_subjects):
            s = design.slice(i)
            D = np.diag(fit.sigma2 / w[s] ** 2)
            Vs.append(design.Z[s] @ fit.B @ design.Z[s].T + D)
            Xs.append(design.X[s])
            ys.append(design.y[s])
        np.testing.assert_allclose(fit.beta, gls_beta(Xs, ys, Vs), atol=1e-8)

    def test_weight_scale_invariance(self):
        design = self.fixture(seed=6)
        w = np.random.default_rng(7).uniform(0.5, 1.5, size=design.n_obs)
        f1 = fit_lmm_ml(design, w)
        f2 = fit_lmm_ml(design, 3.7 * w)
        np.testing.assert_allclose(f1.beta, f2.beta, atol=1e-8)
        np.testing.assert_allclose(f1.blups, f2.blups, atol=1e-8)
        np.testing.assert_allclose(f1.B, f2.B, atol=1e-8)

    def test_general_q2_against_oracles(self):
        rng = np.random.default_rng(8)
        n_subjects, n_per = 30, 6
        B_true = np.array([[0.25, 0.05], [0.05, 0.09]])
        L = np.linalg.cholesky(B_true)
        ys, Xs, Zs, ts = [], [], [], []
        for _ in range(n_subjects):
            t = np.linspace(0, 1, n_per)
            Z = np.column_stack([np.ones(n_per), t])
            b = L @ rng.normal(size=2)
            y = 0.5 + 1.5 * t + Z @ b + rng.normal(size=n_per) * 0.4
            Xs.append(np.column_stack([np.ones(n_per), t]))
            Zs.append(Z)
            ts.append(t)
            ys.append(y)
        design = ClusteredDesign.from_blocks(list(range(n_subjects)), ys, Xs, Zs, ts)
        fit = fit_lmm_ml(design)
        # GLS oracle at the returned covariance parameters
        Vs = []
        for i in range(n_subjects):
            s = design.slice(i)
            Vs.append(design.Z[s] @ fit.B @ design.Z[s].T + fit.sigma2 * np.eye(n_per))
        oracle = gls_beta([design.X[design.slice(i)] for i in range(n_subjects)],
                          [design.y[design.slice(i)] for i in range(n_subjects)], Vs)
        np.testing.assert_allclose(fit.beta, oracle, atol=1e-6)
        # likelihood oracle
        direct = sum(
            mvn_logpdf_dense(
                design.y[design.slice(i)], design.X[design.slice(i)] @ fit.beta, Vs[i]
            )
            for i in range(n_subjects)
        )
        assert abs(direct - fit.loglik) < 1e-6


class TestThetaMle:
    def test_constant_closed_form(self):
        e = np.array([1.0, -2.0, 3.0, -1.5])
        theta = fit_theta_mle(e, np.zeros(4), Shape.CONSTANT, None)
        np.testing.assert_allclose(theta, [np.sqrt(np.mean(e**2))])

    @pytest.mark.parametrize("seed", [11, 12, 13, 14, 15])
    def test_matches_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        n = 400
        v = rng.uniform(0.0, 1.0, size=n)
        true = rng.uniform(0.5, 2.5, size=2)
        spec = make_even_spec("I", 1, 1, 0.0, 1.0)
        basis = eval_basis(spec, v).values[:, 0]
        e = rng.normal(size=n) * (true[0] + true[1] * basis)
        theta = fit_theta_mle(e, v, Shape.INCREASING_I, spec, seed=seed)
        oracle = grid_search_two_param(e, basis, step=0.01, cap=5.0)
        assert np.max(np.abs(theta - oracle)) <= 0.0101

    def test_consistency_large_sample(self):
        rng = np.random.default_rng(16)
        n = 5000
        v = rng.uniform(0.0, 1.0, size=n)
        spec = make_even_spec("I", 1, 1, 0.0, 1.0)
        basis = eval_basis(spec, v).values[:, 0]
        e = rng.normal(size=n) * (1.0 + 2.0 * basis)
        theta = fit_theta_mle(e, v, Shape.INCREASING_I, spec, seed=0)
        assert np.max(np.abs(theta - np.array([1.0, 2.0]))) < 0.15

    def test_decreasing_shape(self):
        rng = np.random.default_rng(17)
        n = 3000
        v = rng.uniform(0.0, 1.0, size=n)
        spec = make_even_spec("I", 2, 2, 0.0, 1.0)
        vm = VarianceModel(Shape.DECREASING_I, spec, [2.0, -0.8, -0.7], IndexKind.TIME)
        e = rng.normal(size=n) * vm.evaluate(v)
        theta = fit_theta_mle(e, v, Shape.DECREASING_I, spec, seed=1)
        assert np.all(theta[1:] <= 1e-12)
        fitted = VarianceModel(Shape.DECREASING_I, spec, theta, IndexKind.TIME)
        fitted.validate()
        grid = np.linspace(0, 1, 101)
        np.testing.assert_allclose(fitted.evaluate(grid), vm.evaluate(grid), atol=0.25)

    def test_increasing_concave_constraints_hold(self):
        rng = np.random.default_rng(18)
        n = 2000
        v = rng.uniform(0.0, 2.0, size=n)
        true_g = 0.5 + np.sqrt(v)  # increasing and concave
        e = rng.normal(size=n) * true_g
        spec = make_even_spec("C", 2, 3, 0.0, 2.0)
        theta = fit_theta_mle(e, v, Shape.INCREASING_CONCAVE_C, spec, seed=2)
        vm = VarianceModel(Shape.INCREASING_CONCAVE_C, spec, theta, IndexKind.TIME)
        vm.validate()
        grid = np.linspace(0.0, 2.0, 513)
        g = vm.evaluate(grid)
        assert np.all(np.diff(g) >= -1e-9)
        assert np.all(np.diff(g, 2) <= 1e-9)

    def test_warm_start_does_not_hurt(self):
        rng = np.random.default_rng(19)
        n = 500
        v = rng.uniform(0.0, 1.0, size=n)
        spec = make_even_spec("I", 2, 3, 0.0, 1.0)
        basis = eval_basis(spec, v).values
        e = rng.normal(size=n) * (0.5 + basis @ [0.4, 0.3, 0.8])
        cold = fit_theta_mle(e, v, Shape.INCREASING_I, spec, seed=3)
        warm = fit_theta_mle(
            e, v, Shape.INCREASING_I, spec, seed=3, warm_start=cold, n_multistarts=0
        )
        def nll(th):
            g = th[0] + basis @ th[1:]
            return np.sum(np.log(g) + e**2 / (2 * g**2))
        assert nll(warm) <= nll(cold) + 1e-8


class TestIrwIndependent:
    def test_constant_converges_immediately(self):
        rng = np.random.default_rng(20)
        X = np.column_stack([np.ones(60), rng.normal(size=60)])
        y = X @ [1.0, 2.0] + rng.normal(size=60)
        design = IndependentDesign(y, X, t=np.linspace(0, 1, 60))
        fit = irw_fit_independent(
            design, VarianceTemplate(Shape.CONSTANT, IndexKind.MARGINAL_MEAN)
        )
        assert fit.converged and fit.n_iterations == 1
        assert fit.trace[0] < 1e-6
        ols = fit_wls(X, y, np.ones(60))
        np.testing.assert_allclose(fit.beta_hat, ols, atol=1e-10)

    def test_g1_recovers_coefficients(self):
        design = gen_independent_g1(200, seed=21)
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=2)
        fit = irw_fit_independent(design, tmpl)
        assert fit.converged
        # within 3 empirical SEs of the generating coefficients
        tol = 3.0 * np.array([0.016, 0.051, 0.035])
        assert np.all(np.abs(fit.beta_hat - 1.0) <= tol)
        fit.variance_model.validate()

    def test_time_index_monotone_fit(self):
        rng = np.random.default_rng(22)
        n = 300
        t = np.sort(rng.uniform(0.0, 1.0, size=n))
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        g_true = 0.3 + 0.9 * t
        y = X @ [0.5, 1.0] + rng.normal(size=n) * g_true
        design = IndependentDesign(y, X, t)
        fit = irw_fit_independent(
            design, VarianceTemplate(Shape.INCREASING_I, IndexKind.TIME, degree=2, df=3)
        )
        grid = np.linspace(t.min(), t.max(), 512)
        assert np.all(np.diff(fit.variance_model.evaluate(grid)) >= -1e-10)

    def test_conditional_mean_rejected(self):
        design = gen_independent_g1(50, seed=23)
        with pytest.raises(ValueError):
            irw_fit_independent(
                design, VarianceTemplate(Shape.INCREASING_I, IndexKind.CONDITIONAL_MEAN)
            )


class TestIrwClustered:
    def test_constant_equals_naive_lmm(self):
        design = gen_clustered(40, seed=24, index_kind=IndexKind.MARGINAL_MEAN)
        fit = irw_fit_clustered(
            design, VarianceTemplate(Shape.CONSTANT, IndexKind.MARGINAL_MEAN)
        )
        naive = fit_lmm_ml(design)
        np.testing.assert_allclose(fit.beta_hat, naive.beta, atol=1e-8)
        np.testing.assert_allclose(fit.theta_hat, [np.sqrt(naive.sigma2)], rtol=1e-6)
        assert fit.converged

    def test_marginal_g1_pilot_bias(self):
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=5)
        betas = []
        for seed in range(20):
            design = gen_clustered(200, seed=100 + seed, index_kind=IndexKind.MARGINAL_MEAN)
            fit = irw_fit_clustered(design, tmpl)
            betas.append(fit.beta_hat)
        betas = np.asarray(betas)
        bias = betas.mean(axis=0) - 1.0
        assert abs(bias[2]) < 0.02
        assert 0.008 < betas[:, 2].std(ddof=1) < 0.04

    def test_shape_respected_on_grid(self):
        design = gen_clustered(80, seed=25, index_kind=IndexKind.MARGINAL_MEAN)
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=5)
        fit = irw_fit_clustered(design, tmpl)
        lo, hi = fit.variance_model.boundary
        g = fit.variance_model.evaluate(np.linspace(lo, hi, 512))
        assert np.all(np.diff(g) >= -1e-10)
        fit.variance_model.validate()

    def test_loglik_consistent_with_marginal_likelihood(self):
        design = gen_clustered(60, seed=26, index_kind=IndexKind.MARGINAL_MEAN)
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=3)
        fit = irw_fit_clustered(design, tmpl)
        direct = loglik_marginal_variance(
            design, fit.beta_hat, fit.alpha_hat, fit.variance_model
        )
        assert abs(direct - fit.loglik) < 1e-10

    def test_zero_random_effect_matches_independent(self):
        design = gen_clustered(
            80, seed=27, index_kind=IndexKind.MARGINAL_MEAN, sigma_b=0.0, center_noise=True
        )
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=3)
        clustered = irw_fit_clustered(design, tmpl)
        independent = irw_fit_independent(design.stacked_independent(), tmpl)
        np.testing.assert_allclose(clustered.beta_hat, independent.beta_hat, atol=1e-6)

    def test_conditional_fit_wins_on_conditional_data(self):
        tmpl_c = VarianceTemplate(Shape.INCREASING_I, IndexKind.CONDITIONAL_MEAN, degree=2, df=5)
        tmpl_m = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=5)
        wins = 0
        n_seeds = 50
        for seed in range(n_seeds):
            design = gen_clustered(
                80, seed=500 + seed, index_kind=IndexKind.CONDITIONAL_MEAN, sigma_b=0.3
            )
            fc = irw_fit_clustered(design, tmpl_c)
            fm = irw_fit_clustered(design, tmpl_m)
            if fc.loglik > fm.loglik:
                wins += 1
        assert wins > n_seeds // 2

    def test_result_serialization_round_trip(self):
        from shapevar.fitting import FitResult

        design = gen_clustered(30, seed=28, index_kind=IndexKind.MARGINAL_MEAN)
        tmpl = VarianceTemplate(Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, degree=2, df=3)
        fit = irw_fit_clustered(design, tmpl)
        back = FitResult.from_dict(fit.to_dict())
        grid = np.linspace(*fit.variance_model.boundary, 67)
        np.testing.assert_allclose(
            back.variance_model.evaluate(grid), fit.variance_model.evaluate(grid), atol=1e-12
        )
        np.testing.assert_allclose(back.beta_hat, fit.beta_hat, atol=0)
        np.testing.assert_allclose(back.fitted_marginal_mean, fit.fitted_marginal_mean, atol=0)
