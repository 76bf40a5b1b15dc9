"""Predictive scoring and bootstrap cross-validation.

Scores: area under the ROC curve (discrimination), calibration slope
(the coefficient from re-regressing outcomes on predicted log odds) and
the logarithmic score (mean negative predictive log likelihood; lower is
better).  Bootstrap cross-validation refits a full selection strategy on
each resample and scores it on the out-of-bag rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .bayes_factors import GPriorSpec
from .data import Dataset, make_dataset
from .errors import (
    ConfigError,
    DataError,
    NonConvergenceError,
    NumericError,
    UndefinedMetricError,
    ZeroVarianceError,
)
from .fitting import fit_glm, fit_model
from .modelspec import FP_POWERS, ModelSpec
from .posterior import GPosterior, mean_shrinkage
from .selection import (
    ModelPrior,
    enumerate_models,
    select_bma,
    select_map,
    select_mpm,
    stochastic_search,
)

LS_CLIP = 1e-12


def _check_binary(pi_hat, y):
    pi_hat = np.asarray(pi_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if pi_hat.shape != y.shape:
        raise DataError("predictions and outcomes must align")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("outcomes must be binary")
    return pi_hat, y


def auc(pi_hat, y) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Tied predictions count one half.  Requires both classes present.
    """
    pi_hat, y = _check_binary(pi_hat, y)
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("AUC undefined for a single-class sample")
    ranks = rankdata(pi_hat)
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def calibration_slope(pi_hat, y) -> float:
    """Slope of the logistic recalibration of y on predicted log odds.

    1 indicates perfect calibration; below 1 indicates overfitted
    (too extreme) predictions.  The recalibration regression keeps a free
    intercept.
    """
    pi_hat, y = _check_binary(pi_hat, y)
    if np.any(pi_hat <= 0.0) or np.any(pi_hat >= 1.0):
        raise DataError("predictions must lie strictly inside (0, 1)")
    logits = np.log(pi_hat / (1.0 - pi_hat))
    ds = make_dataset(y=y, X=logits.reshape(-1, 1), family="binomial")
    fit = fit_glm(ds, ModelSpec.from_mask([1]))
    return float(fit.beta_hat[0])


def log_score(pi_hat, y) -> float:
    """Mean negative log likelihood of held-out binary outcomes."""
    pi_hat, y = _check_binary(pi_hat, y)
    p = np.clip(pi_hat, LS_CLIP, 1.0 - LS_CLIP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


@dataclass(frozen=True)
class ScoreReport:
    auc: float
    cs: float
    ls: float
    m: int


def score_predictions(pi_hat, y) -> ScoreReport:
    """All three scores at once."""
    pi_hat, y = _check_binary(pi_hat, y)
    return ScoreReport(
        auc=auc(pi_hat, y),
        cs=calibration_slope(pi_hat, y),
        ls=log_score(pi_hat, y),
        m=y.size,
    )


@dataclass(frozen=True)
class ReplicateScore:
    index: int
    status: str  # ok | failed | single_class
    m: int
    auc: float = np.nan
    cs: float = np.nan
    ls: float = np.nan


@dataclass(frozen=True)
class BootstrapReport:
    """Out-of-bag score means with Monte Carlo standard errors."""

    replicates: tuple
    auc_mean: float
    auc_se: float
    cs_mean: float
    cs_se: float
    ls_mean: float
    ls_se: float
    n_ok: int
    n_failed: int
    n_single_class: int
    n_cs_undefined: int


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.nan, np.nan
    se = values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else np.nan
    return float(values.mean()), float(se)


def bootstrap_cv(
    ds: Dataset,
    strategy,
    B: int,
    seed,
    resample_hook=None,
    max_failure_rate: float = 0.2,
) -> BootstrapReport:
    """Bootstrap cross-validation of a model selection strategy.

    Per replicate: resample n rows with replacement, run the strategy on
    the resample, and score its predictions on the out-of-bag rows.
    Replicates with a single-class out-of-bag set keep their log score
    but are dropped from the AUC and calibration averages; strategy
    failures are recorded and tolerated up to ``max_failure_rate``.

    Parameters
    ----------
    strategy : callable
        ``strategy(train_ds, seed) -> predict`` with ``predict(X_rows)``
        returning event probabilities.
    resample_hook : callable, optional
        Test hook ``hook(rng, n) -> (in_rows, out_rows)`` replacing the
        with-replacement resampling.
    """
    if ds.family != "binomial":
        raise ConfigError("bootstrap validation requires a binary outcome")
    if B < 1:
        raise ConfigError("B must be >= 1")
    all_rows = np.arange(ds.n)
    reps = []
    cs_undefined = 0
    seeds = np.random.SeedSequence(seed).spawn(B)
    for b in range(B):
        rs_seed, strat_seed = seeds[b].spawn(2)
        rng = np.random.default_rng(rs_seed)
        if resample_hook is not None:
            in_rows, out_rows = resample_hook(rng, ds.n)
            in_rows = np.asarray(in_rows)
            out_rows = np.asarray(out_rows)
        else:
            in_rows = np.sort(rng.integers(0, ds.n, ds.n))
            out_rows = np.setdiff1d(all_rows, in_rows)
        if out_rows.size == 0:
            reps.append(ReplicateScore(index=b, status="failed", m=0))
            continue
        try:
            predict = strategy(ds.subset(in_rows), strat_seed)
            pi = np.clip(
                np.asarray(predict(ds.X[out_rows]), dtype=float),
                LS_CLIP,
                1.0 - LS_CLIP,
            )
        except (NumericError, DataError):
            reps.append(ReplicateScore(index=b, status="failed", m=out_rows.size))
            continue
        y_out = ds.y[out_rows]
        ls_val = log_score(pi, y_out)
        classes = np.unique(y_out)
        if classes.size < 2:
            reps.append(
                ReplicateScore(
                    index=b, status="single_class", m=out_rows.size, ls=ls_val
                )
            )
            continue
        auc_val = auc(pi, y_out)
        try:
            cs_val = calibration_slope(pi, y_out)
        except (ZeroVarianceError, NonConvergenceError):
            cs_val = np.nan
            cs_undefined += 1
        reps.append(
            ReplicateScore(
                index=b, status="ok", m=out_rows.size, auc=auc_val, cs=cs_val, ls=ls_val
            )
        )
    n_failed = sum(1 for r in reps if r.status == "failed")
    if n_failed > max_failure_rate * B:
        raise NumericError(
            f"{n_failed}/{B} bootstrap replicates failed (> {max_failure_rate:.0%})"
        )
    auc_mean, auc_se = _mean_se([r.auc for r in reps])
    cs_mean, cs_se = _mean_se([r.cs for r in reps])
    ls_mean, ls_se = _mean_se([r.ls for r in reps if r.status in ("ok", "single_class")])
    return BootstrapReport(
        replicates=tuple(reps),
        auc_mean=auc_mean,
        auc_se=auc_se,
        cs_mean=cs_mean,
        cs_se=cs_se,
        ls_mean=ls_mean,
        ls_se=ls_se,
        n_ok=sum(1 for r in reps if r.status == "ok"),
        n_failed=n_failed,
        n_single_class=sum(1 for r in reps if r.status == "single_class"),
        n_cs_undefined=cs_undefined,
    )


def tbf_strategy(
    gspec: GPriorSpec,
    mode: str = "variable",
    selection: str = "bma",
    bma_models: int = 8000,
    search: tuple | None = None,
    power_set: tuple = FP_POWERS,
    max_degree: int = 2,
    enumeration_limit: int = 14,
):
    """Build a bootstrap strategy running the full selection pipeline.

    Enumerates exhaustively for variable selection with at most
    ``enumeration_limit`` covariates, otherwise runs the stochastic
    search with ``search = (iterations, top_k)``.  Predictions are
    posterior-mean plug-ins: the response function applied to
    ``alpha_hat + x' (E[t] beta_hat)`` per model, averaged over the
    selected models.
    """
    if selection not in ("map", "mpm", "bma"):
        raise ConfigError(f"unknown selection {selection!r}")

    def strategy(train_ds: Dataset, seed):
        prior = ModelPrior.for_dataset(
            train_ds, mode, power_set=tuple(power_set), max_degree=max_degree
        )
        if search is None and mode == "variable" and train_ds.p <= enumeration_limit:
            post = enumerate_models(train_ds, prior, gspec)
        else:
            iterations, top_k = search if search is not None else (10_000, 1_000)
            post = stochastic_search(train_ds, prior, gspec, iterations, top_k, seed)
        if selection == "map":
            sel = select_map(post)
        elif selection == "mpm":
            sel = select_mpm(post)
        else:
            sel = select_bma(post, models=bma_models)

        models = []
        for spec, weight in sel.entries:
            fit = fit_model(train_ds, spec)
            if fit.d == 0:
                t = 0.0
            elif gspec.kind == "global_eb":
                g_hat = post.g_global if post.g_global is not None else 0.0
                t = g_hat / (g_hat + 1.0)
            else:
                t = mean_shrinkage(
                    GPosterior.from_model(gspec, fit.z, fit.d, train_ds.n_eff)
                )
            models.append((fit, t, weight))

        def predict(Xnew):
            Xnew = np.asarray(Xnew, dtype=float)
            if Xnew.ndim == 1:
                Xnew = Xnew.reshape(1, -1)
            acc = np.zeros(Xnew.shape[0])
            for fit, t, weight in models:
                Xc = fit.design.apply(Xnew, train_ds.covariates)
                eta = fit.alpha_hat + (Xc @ (t * fit.beta_hat) if fit.d else 0.0)
                acc += weight * expit(eta)
            return acc

        return predict

    return strategy
