import numpy as np
import pytest

from tbfsel import ModelSpec, center_design, fit_cox, fit_glm, fit_model, fit_null, make_dataset
from tbfsel.errors import (
    ConfigError,
    DegenerateInterceptError,
    NoEventsError,
    NonConvergenceError,
    SingularDesignError,
    ZeroVarianceError,
)
from tbfsel.fitting import cox_partial_loglik, g_prior_scale_constant, glm_loglik

from conftest import simulate_cox, simulate_gaussian, simulate_logistic

ALL_IN = ModelSpec.from_mask([1])


class TestCenterDesign:
    def test_unit_weights(self):
        ds = make_dataset(y=[0.0, 1.0, 0.0], X=[[1.0], [2.0], [3.0]], family="gaussian")
        cd = center_design(ds, ALL_IN)
        np.testing.assert_allclose(cd.Xc[:, 0], [-1.0, 0.0, 1.0])

    def test_weighted_mean(self):
        ds = make_dataset(
            y=[0.0, 1.0, 0.0], X=[[0.0], [0.0], [2.0]], w=[1.0, 1.0, 2.0], family="gaussian"
        )
        cd = center_design(ds, ALL_IN)
        np.testing.assert_allclose(cd.Xc[:, 0], [-1.0, -1.0, 1.0])

    def test_constant_column_rejected(self):
        ds = make_dataset(y=[0.0, 1.0, 0.0], X=[[5.0], [5.0], [5.0]], family="gaussian")
        with pytest.raises(ZeroVarianceError):
            center_design(ds, ALL_IN)

    def test_weighted_orthogonality_invariant(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(
            y=rng.standard_normal(50),
            X=rng.standard_normal((50, 4)),
            w=rng.uniform(0.5, 2.0, 50),
            family="gaussian",
        )
        cd = center_design(ds, ModelSpec.from_mask([1, 1, 1, 1]))
        resid = cd.Xc.T @ cd.cweights
        scale = np.abs(cd.Xc.T @ np.abs(cd.cweights)).max()
        assert np.all(np.abs(resid) <= 1e-10 * max(scale, 1.0))


class TestNullFits:
    def test_gaussian_mean(self):
        ds = make_dataset(y=[1.0, 2.0, 3.0], X=np.zeros((3, 0)), family="gaussian")
        fit = fit_null(ds)
        assert fit.alpha_hat == pytest.approx(2.0)
        assert fit.z == 0.0 and fit.d == 0

    def test_binomial_symmetric(self):
        ds = make_dataset(y=[0.0, 1.0], X=np.zeros((2, 0)), family="binomial")
        fit = fit_null(ds)
        assert fit.alpha_hat == pytest.approx(0.0)
        assert fit.z == 0.0

    def test_binomial_degenerate(self):
        ds = make_dataset(y=[1.0, 1.0, 1.0], X=np.zeros((3, 0)), family="binomial")
        with pytest.raises(DegenerateInterceptError):
            fit_null(ds)

    def test_cox_all_censored(self):
        ds = make_dataset(
            y=[1.0, 2.0], X=np.zeros((2, 0)), family="cox", status=[0.0, 0.0]
        )
        with pytest.raises(NoEventsError):
            fit_null(ds)


class TestGLM:
    def test_orthogonal_covariate_zero_deviance(self):
        # x centered and orthogonal to centered y: slope and R^2 vanish
        y = np.array([1.0, -1.0, 1.0, -1.0])
        x = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        ds = make_dataset(y=y, X=x, family="gaussian")
        fit = fit_glm(ds, ALL_IN)
        assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-12)
        assert fit.z == pytest.approx(0.0, abs=1e-10)
        assert fit.r2 == pytest.approx(0.0, abs=1e-12)

    def test_separated_logistic_raises(self):
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1], float)
        x = y.reshape(-1, 1).copy()
        x[:, 0] = [1, 2, 3, 4, 5, 6, 7, 8]
        ds = make_dataset(y=y, X=x, family="binomial")
        with pytest.raises(NonConvergenceError) as err:
            fit_glm(ds, ALL_IN)
        assert err.value.last_fit is not None
        assert not err.value.last_fit.converged

    def test_logistic_grid_oracle(self):
        # Frozen from an 8-round 161x161 refining grid search over
        # (intercept, slope); the null maximum comes from a 1-D grid.
        y = np.array([0, 0, 1, 0, 1, 1, 0, 1], float)
        x = np.array([-1.2, -0.8, -0.3, 0.1, 0.4, 0.9, 1.3, 1.8]).reshape(-1, 1)
        ds = make_dataset(y=y, X=x, family="binomial")
        fit = fit_glm(ds, ALL_IN)
        assert fit.converged
        assert fit.z == pytest.approx(1.652058117695, abs=1e-4)
        assert fit.beta_hat[0] == pytest.approx(1.04379088, abs=1e-4)

    def test_rank_deficiency(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 1))
        ds = make_dataset(
            y=rng.standard_normal(20), X=np.column_stack([x, 2 * x]), family="gaussian"
        )
        with pytest.raises(SingularDesignError):
            fit_glm(ds, ModelSpec.from_mask([1, 1]))

    def test_glm_rejects_cox(self):
        ds = simulate_cox(30, [0.5], seed=1)
        with pytest.raises(ConfigError):
            fit_glm(ds, ALL_IN)


class TestCox:
    def test_null_spec(self):
        ds = simulate_cox(40, [0.5], seed=5)
        fit = fit_cox(ds, ModelSpec.null(1))
        assert fit.z == 0.0 and fit.d == 0
        assert fit.alpha_hat is None

    def test_grid_oracle(self):
        # Frozen from explicit risk-set enumeration + 1-D refining grid.
        ds = make_dataset(
            y=[1.0, 2.0, 3.0],
            X=np.array([[1.0], [0.0], [1.0]]),
            family="cox",
            status=[1.0, 1.0, 1.0],
        )
        fit = fit_cox(ds, ALL_IN)
        assert fit.z == pytest.approx(0.058024590378, abs=1e-4)
        assert fit.beta_hat[0] == pytest.approx(-0.34657359, abs=1e-4)

    def test_partial_loglik_matches_enumeration(self):
        ds = simulate_cox(25, [0.7], seed=9, censor_rate=0.8)
        design = center_design(ds, ALL_IN)
        beta = np.array([0.3])
        eta = design.Xc @ beta
        expected = 0.0
        for i in range(ds.n):
            if ds.status[i] == 1:
                risk = ds.y >= ds.y[i]
                expected += eta[i] - np.log(np.sum(np.exp(eta[risk])))
        assert cox_partial_loglik(ds, beta, design) == pytest.approx(expected, abs=1e-10)

    def test_monotone_likelihood_raises(self):
        # Covariate perfectly ranks the event times: MLE at infinity.
        ds = make_dataset(
            y=[1.0, 2.0, 3.0, 4.0],
            X=np.array([[4.0], [3.0], [2.0], [1.0]]),
            family="cox",
            status=[1.0, 1.0, 1.0, 1.0],
        )
        with pytest.raises(NonConvergenceError):
            fit_cox(ds, ALL_IN)

    def test_ties_method_guard(self):
        ds = simulate_cox(20, [0.5], seed=2)
        with pytest.raises(ConfigError):
            fit_cox(ds, ALL_IN, ties="efron")


class TestInvariants:
    def test_deviance_additivity(self):
        ds = simulate_logistic(300, [0.8, -0.5, 0.3], seed=21)
        z1 = fit_glm(ds, ModelSpec.from_mask([1, 0, 0])).z
        z2 = fit_glm(ds, ModelSpec.from_mask([1, 1, 0])).z
        z3 = fit_glm(ds, ModelSpec.from_mask([1, 1, 1])).z
        assert z3 == pytest.approx((z3 - z2) + (z2 - z1) + z1, abs=1e-8)

    def test_gaussian_deviance_identity(self):
        ds = simulate_gaussian(120, [0.7, -0.2], seed=13)
        fit = fit_glm(ds, ModelSpec.from_mask([1, 1]))
        # R^2 recomputed from scratch via OLS residuals
        X1 = np.column_stack([np.ones(ds.n), ds.X])
        coef, *_ = np.linalg.lstsq(X1, ds.y, rcond=None)
        rss = np.sum((ds.y - X1 @ coef) ** 2)
        rss0 = np.sum((ds.y - ds.y.mean()) ** 2)
        r2 = 1 - rss / rss0
        assert fit.z == pytest.approx(-ds.n * np.log(1 - r2), abs=1e-10)

    @pytest.mark.parametrize("family", ["gaussian", "binomial", "poisson"])
    def test_rescaling_invariance(self, family):
        rng = np.random.default_rng(31)
        X = rng.standard_normal((150, 2))
        if family == "gaussian":
            y = 0.5 * X[:, 0] + rng.standard_normal(150)
        elif family == "binomial":
            y = (rng.random(150) < 0.4).astype(float)
        else:
            y = rng.poisson(np.exp(0.2 * X[:, 0])).astype(float)
        spec = ModelSpec.from_mask([1, 1])
        z_base = fit_glm(make_dataset(y=y, X=X, family=family), spec).z
        X2 = X.copy()
        X2[:, 0] *= -37.5
        z_scaled = fit_glm(make_dataset(y=y, X=X2, family=family), spec).z
        assert z_scaled == pytest.approx(z_base, abs=1e-8)

    @pytest.mark.parametrize("family", ["binomial", "poisson", "gaussian", "cox"])
    def test_observed_info_is_negative_hessian(self, family):
        if family == "cox":
            ds = simulate_cox(60, [0.6, -0.4], seed=17, censor_rate=0.7)
        elif family == "poisson":
            rng = np.random.default_rng(23)
            X = rng.standard_normal((80, 2))
            y = rng.poisson(np.exp(0.3 + 0.4 * X[:, 0])).astype(float)
            ds = make_dataset(y=y, X=X, family="poisson")
        elif family == "binomial":
            ds = simulate_logistic(100, [0.5, -0.7], seed=29)
        else:
            ds = simulate_gaussian(80, [0.5, -0.7], seed=37)
        spec = ModelSpec.from_mask([1, 1])
        fit = fit_model(ds, spec)
        design = fit.design
        h = 1e-5

        if family == "cox":
            def ll(beta):
                return cox_partial_loglik(ds, beta, design)
            point = fit.beta_hat
        elif family == "gaussian":
            # Conditional on the profiled variance the Hessian of the
            # quadratic form is exact: -X'WX / sigma2.
            def ll(beta):
                resid = ds.y - fit.alpha_hat - design.Xc @ beta
                return -0.5 * np.sum(ds.w * resid**2) / fit.sigma2
            point = fit.beta_hat
        else:
            def ll(beta):
                return glm_loglik(ds, fit.alpha_hat, beta, design)
            point = fit.beta_hat

        d = point.size
        hess = np.zeros((d, d))
        for i in range(d):
            for j in range(d):
                e_i = np.eye(d)[i] * h
                e_j = np.eye(d)[j] * h
                hess[i, j] = (
                    ll(point + e_i + e_j)
                    - ll(point + e_i - e_j)
                    - ll(point - e_i + e_j)
                    + ll(point - e_i - e_j)
                ) / (4 * h * h)
        rel = np.linalg.norm(fit.info_beta + hess) / np.linalg.norm(fit.info_beta)
        assert rel < 1e-4

    @pytest.mark.parametrize("family", ["gaussian", "binomial", "poisson"])
    def test_duplicate_rows_halved_weights(self, family):
        rng = np.random.default_rng(41)
        X = rng.standard_normal((60, 2))
        if family == "gaussian":
            y = 1.0 + 0.5 * X[:, 0] + rng.standard_normal(60)
        elif family == "binomial":
            y = (rng.random(60) < 0.5).astype(float)
        else:
            y = rng.poisson(np.exp(0.1 + 0.3 * X[:, 0])).astype(float)
        spec = ModelSpec.from_mask([1, 1])
        base = fit_glm(make_dataset(y=y, X=X, family=family), spec)
        dup = fit_glm(
            make_dataset(
                y=np.concatenate([y, y]),
                X=np.vstack([X, X]),
                w=np.full(120, 0.5),
                family=family,
            ),
            spec,
        )
        np.testing.assert_allclose(dup.beta_hat, base.beta_hat, atol=1e-8)
        np.testing.assert_allclose(dup.alpha_hat, base.alpha_hat, atol=1e-8)
        assert dup.z == pytest.approx(base.z, abs=1e-8)


def test_scale_constant_matches_family_formulas():
    ds = simulate_logistic(50, [0.5], seed=43)
    mu = ds.y.mean()
    assert g_prior_scale_constant(ds) == pytest.approx(1.0 / (mu * (1 - mu)))
    ds_g = simulate_gaussian(50, [0.5], seed=43)
    assert g_prior_scale_constant(ds_g) == pytest.approx(np.var(ds_g.y))
