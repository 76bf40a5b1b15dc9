import numpy as np
import pytest

from tbfsel import (
    GPriorSpec,
    ModelPrior,
    ModelSpec,
    enumerate_models,
    fp_transform,
    log_model_prior,
    make_dataset,
    select_bma,
    select_map,
    select_mpm,
    stochastic_search,
)
from tbfsel.errors import ConfigError, DataError

from conftest import simulate_gaussian, simulate_logistic


class TestFpTransform:
    def test_identity_power(self):
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(fp_transform(x, (1,)), x.reshape(-1, 1))

    def test_log_power(self):
        x = np.array([1.0, np.e])
        np.testing.assert_allclose(fp_transform(x, (0,)), np.log(x).reshape(-1, 1))

    def test_repeated_power(self):
        x = np.array([1.0, np.e])
        cols = fp_transform(x, (2, 2))
        np.testing.assert_allclose(cols[:, 0], [1.0, np.e**2])
        np.testing.assert_allclose(cols[:, 1], [0.0, np.e**2])

    def test_nonpositive_rejected(self):
        with pytest.raises(DataError):
            fp_transform(np.array([0.0, 1.0]), (0.5,))


class TestModelPrior:
    def test_beta_binomial_p2(self):
        prior = ModelPrior(mode="variable", p=2)
        probs = {
            (0, 0): 1 / 3,
            (1, 0): 1 / 6,
            (0, 1): 1 / 6,
            (1, 1): 1 / 3,
        }
        for mask, expected in probs.items():
            lp = log_model_prior(ModelSpec.from_mask(mask), prior)
            assert np.exp(lp) == pytest.approx(expected, abs=1e-12)

    def test_null_model_any_p(self):
        for p in (1, 4, 9):
            prior = ModelPrior(mode="variable", p=p)
            lp = log_model_prior(ModelSpec.null(p), prior)
            assert np.exp(lp) == pytest.approx(1.0 / (p + 1), abs=1e-12)

    def test_variable_prior_sums_to_one(self):
        for p in (3, 8, 12):
            prior = ModelPrior(mode="variable", p=p)
            from math import comb

            total = 0.0
            for k in range(p + 1):
                lp = log_model_prior(
                    ModelSpec.from_mask([1] * k + [0] * (p - k)), prior
                )
                total += comb(p, k) * np.exp(lp)
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_fp_option_count(self):
        prior = ModelPrior(mode="fp", p=1)
        opts = prior.nonlinear_assignments()
        # 7 non-linear single powers plus C(8,2) + 8 = 36 pairs
        assert len(opts) == 43
        assert np.exp(log_model_prior(ModelSpec(assignments=(None,)), prior)) == 0.5
        assert np.exp(log_model_prior(ModelSpec(assignments=("lin",)), prior)) == 0.25
        lp = log_model_prior(ModelSpec(assignments=(((-1.0, -2.0)),)), prior)
        assert np.exp(lp) == pytest.approx(0.25 / 43, abs=1e-14)

    def test_fp_prior_sums_to_one_per_covariate(self):
        prior = ModelPrior(mode="fp", p=1)
        total = np.exp(log_model_prior(ModelSpec(assignments=(None,)), prior))
        total += np.exp(log_model_prior(ModelSpec(assignments=("lin",)), prior))
        for powers in prior.nonlinear_assignments():
            total += np.exp(log_model_prior(ModelSpec(assignments=(powers,)), prior))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_fp_ineligible_splits_half(self):
        prior = ModelPrior(mode="fp", p=2, fp_allowed=(True, False))
        lp = log_model_prior(ModelSpec(assignments=(None, "lin")), prior)
        assert np.exp(lp) == pytest.approx(0.5 * 0.5, abs=1e-14)
        with pytest.raises(DataError):
            log_model_prior(ModelSpec(assignments=(None, (0.5,))), prior)

    def test_variable_prior_rejects_fp(self):
        prior = ModelPrior(mode="variable", p=1)
        with pytest.raises(DataError):
            log_model_prior(ModelSpec(assignments=((0.5,),)), prior)


class TestEnumeration:
    def test_p0_single_null_model(self):
        ds = make_dataset(y=[1.0, 2.0, 1.5], X=np.empty((3, 0)), family="gaussian")
        post = enumerate_models(ds, ModelPrior(mode="variable", p=0), GPriorSpec.fixed(5.0))
        assert post.n_models == 1
        assert post.entries[0].post_prob == pytest.approx(1.0)

    def test_identical_covariates_symmetric(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(80)
        y = 1.0 + x + rng.standard_normal(80)
        ds = make_dataset(y=y, X=np.column_stack([x, x]), family="gaussian")
        post = enumerate_models(
            ds, ModelPrior(mode="variable", p=2), GPriorSpec.fixed(10.0)
        )
        singles = [e for e in post.entries if len(e.spec.included) == 1]
        assert len(singles) == 2
        assert singles[0].post_prob == pytest.approx(singles[1].post_prob, rel=1e-10)
        # the duplicated full model is rank deficient: scored -inf
        full = [e for e in post.entries if len(e.spec.included) == 2][0]
        assert full.post_prob == 0.0
        assert full.error is not None
        assert any("rank" in msg for msg in post.diagnostics)

    def test_hand_rolled_loop_oracle(self):
        ds = simulate_gaussian(60, [0.8, 0.0, -0.5], seed=99)
        g = 20.0
        post = enumerate_models(
            ds, ModelPrior(mode="variable", p=3), GPriorSpec.fixed(g)
        )
        # Independent pass: OLS per mask, Bayes factor and beta-binomial
        # prior from first principles, normalised by hand.
        from math import comb, lgamma

        unnorm = {}
        for m in range(8):
            mask = [(m >> k) & 1 for k in range(3)]
            cols = [k for k in range(3) if mask[k]]
            X1 = np.column_stack([np.ones(ds.n)] + [ds.X[:, k] for k in cols])
            coef, *_ = np.linalg.lstsq(X1, ds.y, rcond=None)
            rss = np.sum((ds.y - X1 @ coef) ** 2)
            rss0 = np.sum((ds.y - ds.y.mean()) ** 2)
            z = -ds.n * np.log(rss / rss0)
            d = len(cols)
            log_tbf = -d / 2 * np.log(g + 1) + g / (g + 1) * z / 2
            log_prior = -np.log(4.0) - np.log(comb(3, d))
            unnorm[tuple(mask)] = log_tbf + log_prior
        shift = max(unnorm.values())
        total = sum(np.exp(v - shift) for v in unnorm.values())
        for e in post.entries:
            mask = tuple(1 if e.spec.includes(k) else 0 for k in range(3))
            expected = np.exp(unnorm[mask] - shift) / total
            assert e.post_prob == pytest.approx(expected, abs=1e-10)

    def test_budget_refusal(self):
        ds = simulate_gaussian(30, [0.0] * 5, seed=1)
        with pytest.raises(ConfigError, match="stochastic_search"):
            enumerate_models(
                ds, ModelPrior(mode="variable", p=5), GPriorSpec.fixed(1.0), budget=16
            )

    def test_workers_match_serial(self):
        ds = simulate_logistic(120, [0.8, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0], seed=12)
        prior = ModelPrior(mode="variable", p=7)
        serial = enumerate_models(ds, prior, GPriorSpec.local_eb())
        parallel = enumerate_models(ds, prior, GPriorSpec.local_eb(), workers=2)
        np.testing.assert_array_equal(serial.inclusion, parallel.inclusion)
        for a, b in zip(serial.entries, parallel.entries):
            assert a.spec == b.spec and a.post_prob == b.post_prob


class TestInvariants:
    def test_posterior_invariant_to_constant_shift(self, gaussian_ds):
        post = enumerate_models(
            gaussian_ds, ModelPrior(mode="variable", p=3), GPriorSpec.fixed(5.0)
        )
        probs = np.array([e.post_prob for e in post.entries])
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        # renormalising after a constant shift of every log factor is a no-op
        shifted = np.array([e.log_tbf + 37.5 + e.log_prior for e in post.entries])
        renorm = np.exp(shifted - shifted.max())
        renorm /= renorm.sum()
        np.testing.assert_allclose(renorm, probs, atol=1e-12)

    def test_inclusion_recomputable(self, gaussian_ds):
        post = enumerate_models(
            gaussian_ds, ModelPrior(mode="variable", p=3), GPriorSpec.local_eb()
        )
        for k in range(3):
            total = sum(e.post_prob for e in post.entries if e.spec.includes(k))
            assert post.inclusion[k] == pytest.approx(total, abs=1e-12)

    def test_permutation_invariance(self):
        ds = simulate_logistic(150, [0.9, -0.4, 0.1], seed=31)
        prior = ModelPrior(mode="variable", p=3)
        post = enumerate_models(ds, prior, GPriorSpec.hyper_g())
        perm = [2, 0, 1]
        ds_perm = make_dataset(y=ds.y, X=ds.X[:, perm], family="binomial")
        post_perm = enumerate_models(ds_perm, prior, GPriorSpec.hyper_g())
        np.testing.assert_allclose(
            post_perm.inclusion, post.inclusion[perm], atol=1e-12
        )


class TestStochasticSearch:
    def test_matches_enumeration_p3(self, logistic_ds):
        prior = ModelPrior(mode="variable", p=3)
        gspec = GPriorSpec.local_eb()
        exact = enumerate_models(logistic_ds, prior, gspec)
        searched = stochastic_search(
            logistic_ds, prior, gspec, iterations=100_000, top_k=8, seed=5
        )
        assert searched.n_models == 8
        exact_by_spec = {e.spec: e.post_prob for e in exact.entries}
        for e in searched.entries:
            assert e.post_prob == pytest.approx(exact_by_spec[e.spec], abs=0.01)

    def test_seed_determinism(self, logistic_ds):
        prior = ModelPrior(mode="variable", p=3)
        gspec = GPriorSpec.hyper_g()
        a = stochastic_search(logistic_ds, prior, gspec, 5_000, 8, seed=42)
        b = stochastic_search(logistic_ds, prior, gspec, 5_000, 8, seed=42)
        assert [e.spec for e in a.entries] == [e.spec for e in b.entries]
        np.testing.assert_array_equal(
            [e.post_prob for e in a.entries], [e.post_prob for e in b.entries]
        )

    def test_single_iteration_returns_start_only(self, logistic_ds):
        prior = ModelPrior(mode="variable", p=3)
        post = stochastic_search(
            logistic_ds, prior, GPriorSpec.local_eb(), iterations=1, top_k=8, seed=0
        )
        assert post.n_models == 1
        assert post.entries[0].spec.is_null

    def test_fp_mode_search_runs(self):
        rng = np.random.default_rng(77)
        x1 = rng.uniform(0.5, 3.0, 150)
        x2 = rng.standard_normal(150)
        y = 1.0 + 1.0 / x1 + 0.5 * x2 + 0.3 * rng.standard_normal(150)
        from tbfsel.data import Covariate

        ds = make_dataset(
            y=y,
            X=np.column_stack([x1, x2]),
            family="gaussian",
            covariates=(
                Covariate("x1", (0,), "continuous", fp_eligible=True),
                Covariate("x2", (1,), "continuous", fp_eligible=False),
            ),
        )
        prior = ModelPrior.for_dataset(ds, mode="fp")
        post = stochastic_search(
            ds, prior, GPriorSpec.hyper_g(), iterations=3_000, top_k=100, seed=3
        )
        assert sum(e.post_prob for e in post.entries) == pytest.approx(1.0, abs=1e-10)
        assert post.inclusion[0] > 0.9  # strong non-linear signal

    def test_multiple_chains_merge_deterministically(self, logistic_ds):
        prior = ModelPrior(mode="variable", p=3)
        gspec = GPriorSpec.local_eb()
        a = stochastic_search(logistic_ds, prior, gspec, 2_000, 8, seed=21, chains=3)
        b = stochastic_search(logistic_ds, prior, gspec, 2_000, 8, seed=21, chains=3)
        assert [e.spec for e in a.entries] == [e.spec for e in b.entries]
        assert sum(e.post_prob for e in a.entries) == pytest.approx(1.0, abs=1e-10)

    def test_global_eb_rescoring(self, logistic_ds):
        prior = ModelPrior(mode="variable", p=3)
        post = stochastic_search(
            logistic_ds, prior, GPriorSpec.global_eb(), 20_000, 8, seed=11
        )
        assert post.g_global is not None and post.g_global >= 0.0
        exact = enumerate_models(logistic_ds, prior, GPriorSpec.global_eb())
        assert post.g_global == pytest.approx(exact.g_global, rel=1e-3, abs=1e-3)


class TestSelection:
    def test_single_model_all_coincide(self):
        ds = make_dataset(y=[1.0, 2.0, 1.5], X=np.empty((3, 0)), family="gaussian")
        post = enumerate_models(ds, ModelPrior(mode="variable", p=0), GPriorSpec.fixed(2.0))
        assert select_map(post).specs == select_mpm(post).specs == select_bma(post).specs

    def test_two_model_threshold(self, gaussian_ds):
        post = enumerate_models(
            gaussian_ds, ModelPrior(mode="variable", p=3), GPriorSpec.local_eb()
        )
        mpm = select_mpm(post)
        included = set(mpm.specs[0].included)
        expected = {k for k in range(3) if post.inclusion[k] >= 0.5}
        assert included == expected
        map_sel = select_map(post)
        assert map_sel.entries[0][1] == 1.0

    def test_fp_mode_mpm_is_weighted_average(self):
        rng = np.random.default_rng(85)
        x1 = rng.uniform(0.5, 3.0, 200)
        y = 1.0 + 1.0 / x1 + 0.25 * rng.standard_normal(200)
        from tbfsel.data import Covariate

        ds = make_dataset(
            y=y,
            X=x1.reshape(-1, 1),
            family="gaussian",
            covariates=(Covariate("x1", (0,), "continuous", fp_eligible=True),),
        )
        prior = ModelPrior.for_dataset(ds, mode="fp")
        post = stochastic_search(
            ds, prior, GPriorSpec.hyper_g(), iterations=4_000, top_k=200, seed=6
        )
        mpm = select_mpm(post)
        assert mpm.passing == (0,)
        assert len(mpm.entries) > 1  # averaged over transformations
        assert sum(w for _, w in mpm.entries) == pytest.approx(1.0, abs=1e-12)
        for spec, _ in mpm.entries:
            assert spec.included == (0,)

    def test_bma_renormalises(self, gaussian_ds):
        post = enumerate_models(
            gaussian_ds, ModelPrior(mode="variable", p=3), GPriorSpec.local_eb()
        )
        sel = select_bma(post, models=3)
        assert len(sel.entries) == 3
        assert sum(w for _, w in sel.entries) == pytest.approx(1.0, abs=1e-12)
        # best models keep their relative order and odds
        e0, e1 = post.entries[0], post.entries[1]
        w0, w1 = sel.entries[0][1], sel.entries[1][1]
        assert w0 / w1 == pytest.approx(e0.post_prob / e1.post_prob, rel=1e-10)
