"""Posterior sampling of g and regression coefficients, and predictions.

Given a fitted model and a posterior for the prior variance factor g,
coefficients are drawn from the Gaussian approximation around the MLE:
per draw, with t = g/(g+1), beta ~ N(t * beta_hat, t * I_beta^{-1}) and
(for GLMs) an independent unshrunken intercept draw.  Predictions apply
the response function per draw; Cox models combine shrunken log hazard
ratios with the Aalen-Breslow cumulative baseline hazard.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammainc, gammaincinv

from .bayes_factors import GPriorSpec, local_eb_g, tbf_nonconjugate
from .data import Dataset
from .errors import ConfigError, DataError, NoEventsError, NumericError
from .fitting import CenteredDesign, FitSummary


def incig_quantile(p, a: float, b: float):
    """Quantile function of the IncIG(a, b) distribution on g > 0.

    For b > 0 this inverts the gamma CDF: b / Q_gamma((1-p) * P(a, b)) - 1
    with P the regularised lower incomplete gamma; for b = 0 it reduces
    to (1-p)^{-1/a} - 1.  Accepts scalar or array p in [0, 1).
    """
    if a <= 0 or b < 0:
        raise ValueError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr >= 1):
        raise ValueError("p must lie in [0, 1); p = 1 maps to infinity")
    if b == 0.0:
        out = (1.0 - p_arr) ** (-1.0 / a) - 1.0
    else:
        out = b / gammaincinv(a, (1.0 - p_arr) * gammainc(a, b)) - 1.0
    out = np.maximum(out, 0.0)
    return float(out) if np.isscalar(p) else out


def incig_cdf(g, a: float, b: float):
    """CDF of IncIG(a, b): 1 - P(a, b/(g+1)) / P(a, b)."""
    if a <= 0 or b < 0:
        raise ValueError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    g_arr = np.asarray(g, dtype=float)
    if np.any(g_arr < 0):
        raise ValueError("g must be nonnegative")
    if b == 0.0:
        out = 1.0 - (1.0 + g_arr) ** (-a)
    else:
        out = 1.0 - gammainc(a, b / (1.0 + g_arr)) / gammainc(a, b)
    return float(out) if np.isscalar(g) else out


def incig_log_density(g, a: float, b: float):
    """Log density of IncIG(a, b) at g >= 0."""
    from .special import log_incig_norm_const

    g_arr = np.asarray(g, dtype=float)
    out = log_incig_norm_const(a, b) - (a + 1.0) * np.log1p(g_arr) - b / (1.0 + g_arr)
    return float(out) if np.isscalar(g) else out


def incig_mode(a: float, b: float) -> float:
    """Mode of IncIG(a, b): max{b/(a+1) - 1, 0}."""
    return max(b / (a + 1.0) - 1.0, 0.0)


@dataclass(frozen=True)
class GPosterior:
    """Model-specific posterior of g given the deviance statistic.

    Either conjugate (IncIG with updated parameters a + d/2, b + z/2), a
    tabulated log density over the quadrature node variable s (where
    g/(g + n_eff) = 1 - s^2), or a point mass (fixed g and empirical
    Bayes schemes).
    """

    kind: str  # incig | grid | point
    a: float | None = None
    b: float | None = None
    s_grid: np.ndarray | None = None
    log_density: np.ndarray | None = None
    n_eff: float | None = None
    g: float | None = None

    @classmethod
    def from_model(cls, gspec: GPriorSpec, z: float, d: int, n_eff: float) -> "GPosterior":
        """Posterior of g for one model under the given scheme."""
        if d == 0:
            raise ConfigError("the null model has no coefficients and no g posterior")
        if gspec.kind == "fixed":
            return cls(kind="point", g=float(gspec.g))
        if gspec.kind == "local_eb":
            return cls(kind="point", g=local_eb_g(z, d))
        if gspec.kind == "global_eb":
            raise ConfigError(
                "global EB fixes one g for the whole model space; build a "
                "point posterior from that estimate instead"
            )
        if gspec.is_conjugate:
            a, b = gspec.incig_params(n_eff)
            return cls(kind="incig", a=a + d / 2.0, b=b + z / 2.0)
        res = tbf_nonconjugate(z, d, gspec.kind, n_eff)
        return cls(
            kind="grid", s_grid=res.s_grid, log_density=res.log_post, n_eff=res.n_eff
        )


def _sample_piecewise_exp(x: np.ndarray, log_f: np.ndarray, size: int, rng):
    """Inverse-CDF draws from a piecewise-linear log density over x.

    Each segment is exponential in x, so segment masses and the inverse
    CDF within a segment are available in closed form.
    """
    if x.size == 1:
        return np.full(size, x[0])
    shift = np.max(log_f[np.isfinite(log_f)])
    f0 = log_f[:-1] - shift
    f1 = log_f[1:] - shift
    h = np.diff(x)
    slope = np.where(h > 0, (f1 - f0) / np.where(h > 0, h, 1.0), 0.0)
    flat = np.abs(slope) < 1e-12
    with np.errstate(over="ignore", invalid="ignore"):
        mass = np.where(
            flat,
            np.exp(np.logaddexp(f0, f1) - np.log(2.0)) * h,
            (np.exp(f1) - np.exp(f0)) / np.where(flat, 1.0, slope),
        )
    mass = np.where(np.isfinite(mass) & (mass > 0), mass, 0.0)
    total = mass.sum()
    if total <= 0:
        raise NumericError("grid posterior for g has no mass")
    cum = np.concatenate([[0.0], np.cumsum(mass)]) / total
    r = rng.random(size)
    seg = np.clip(np.searchsorted(cum, r, side="right") - 1, 0, mass.size - 1)
    # Invert within the segment: target mass m solves
    # exp(f0) (exp(s x) - 1) / s = m  for the offset x.
    m = (r - cum[seg]) * total
    sl = slope[seg]
    off = np.where(
        flat[seg],
        m / np.maximum(np.exp(f0[seg]), 1e-300),
        np.log1p(np.where(flat[seg], 0.0, sl * m * np.exp(-f0[seg])))
        / np.where(flat[seg], 1.0, sl),
    )
    return np.clip(x[seg] + off, x[0], x[-1])


def mean_shrinkage(post: GPosterior) -> float:
    """Posterior mean of the shrinkage factor t = g/(g+1).

    Closed form for the conjugate case: 1 - M(a, b)/M(a+1, b); trapezoid
    ratio on the tabulated density otherwise.
    """
    from .special import log_incig_norm_const

    if post.kind == "point":
        return float(post.g / (post.g + 1.0))
    if post.kind == "incig":
        return float(
            1.0
            - np.exp(
                log_incig_norm_const(post.a, post.b)
                - log_incig_norm_const(post.a + 1.0, post.b)
            )
        )
    if post.kind == "grid":
        from .bayes_factors import g_of_node

        lf = post.log_density
        finite = np.isfinite(lf)
        if not np.any(finite):
            raise NumericError("grid posterior for g has no mass")
        f = np.exp(lf - np.max(lf[finite]))
        s = post.s_grid
        g = g_of_node(np.maximum(s, 1e-300), post.n_eff)
        t = 1.0 - 1.0 / (1.0 + g)
        return float(np.trapezoid(f * t, s) / np.trapezoid(f, s))
    raise ConfigError(f"unknown posterior kind {post.kind!r}")


def sample_g(post: GPosterior, size: int, seed) -> np.ndarray:
    """Draw g values from a model-specific posterior.

    Conjugate posteriors use inverse sampling through the quantile
    function; grid posteriors integrate the piecewise-exponential
    interpolant in closed form.  Draws are deterministic given the seed.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    if post.kind == "point":
        return np.full(size, float(post.g))
    if post.kind == "incig":
        return incig_quantile(rng.random(size), post.a, post.b)
    if post.kind == "grid":
        s = _sample_piecewise_exp(post.s_grid, post.log_density, size, rng)
        s = np.maximum(s, 1e-12)
        from .bayes_factors import g_of_node

        return g_of_node(s, post.n_eff)
    raise ConfigError(f"unknown posterior kind {post.kind!r}")


@dataclass(frozen=True)
class CoefficientDraws:
    """Joint draws of (intercept, coefficients) with their g values.

    ``draws`` has one column per design column, preceded by the intercept
    for GLM families; Cox models have no intercept column.
    """

    family: str
    draws: np.ndarray
    g_draws: np.ndarray
    design: CenteredDesign
    has_intercept: bool

    @property
    def spec(self):
        return self.design.spec

    @property
    def beta(self) -> np.ndarray:
        return self.draws[:, 1:] if self.has_intercept else self.draws


def sample_coefficients(fit: FitSummary, g_draws, seed) -> CoefficientDraws:
    """Draw coefficients from the shrunken Gaussian posterior approximation.

    Per draw with t = g/(g+1): beta ~ N(t * beta_hat, t * I_beta^{-1});
    the intercept (GLM families) is drawn independently from
    N(alpha_hat, I_alpha^{-1}) since centering decorrelates it from beta.
    """
    if not fit.converged:
        raise NumericError("cannot sample from a non-converged fit")
    g_draws = np.asarray(g_draws, dtype=float)
    if np.any(g_draws < 0) or not np.all(np.isfinite(g_draws)):
        raise ValueError("g draws must be finite and nonnegative")
    rng = np.random.default_rng(seed)
    S = g_draws.shape[0]
    d = fit.d
    t = g_draws / (g_draws + 1.0)

    if d > 0:
        try:
            L = np.linalg.cholesky(fit.info_beta)
        except np.linalg.LinAlgError:
            jitter = 1e-10 * np.trace(fit.info_beta)
            try:
                L = np.linalg.cholesky(fit.info_beta + jitter * np.eye(d))
            except np.linalg.LinAlgError:
                raise NumericError(
                    "observed information not positive definite"
                ) from None
        eps = rng.standard_normal((S, d))
        # info_beta = L L^T, so solving L^T x = eps gives x ~ N(0, I^{-1}).
        unit = np.linalg.solve(L.T, eps.T).T
        beta = t[:, None] * fit.beta_hat + np.sqrt(t)[:, None] * unit
    else:
        beta = np.empty((S, 0))

    if fit.has_intercept:
        alpha = fit.alpha_hat + rng.standard_normal(S) / np.sqrt(fit.info_alpha)
        draws = np.column_stack([alpha, beta])
    else:
        draws = beta
    return CoefficientDraws(
        family=fit.family,
        draws=draws,
        g_draws=g_draws,
        design=fit.design,
        has_intercept=fit.has_intercept,
    )


def _response(family: str, eta: np.ndarray) -> np.ndarray:
    if family == "gaussian":
        return eta
    if family == "binomial":
        return expit(eta)
    if family == "poisson":
        return np.exp(eta)
    raise ConfigError(f"no response function for family {family!r}")


@dataclass(frozen=True)
class PredictiveSummary:
    """Pointwise summaries of per-draw predictive means."""

    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    draws: np.ndarray = field(repr=False)


def predict_glm(
    draws: CoefficientDraws, newX, covariates, level: float = 0.95
) -> PredictiveSummary:
    """Predictive means h(alpha + x' beta) per draw, with summaries.

    ``newX`` holds raw covariate columns in the training layout; the
    training positivity shifts and centering constants stored in the fit
    are applied before the linear predictor is formed.
    """
    if draws.family == "cox":
        raise ConfigError("use survival_curves for cox predictions")
    newX = np.asarray(newX, dtype=float)
    if newX.ndim == 1:
        newX = newX.reshape(1, -1)
    ncols = max((c for cov in covariates for c in cov.columns), default=-1) + 1
    if newX.shape[1] < ncols:
        raise DataError(
            f"new data has {newX.shape[1]} columns; needs at least {ncols}"
        )
    Xc = draws.design.apply(newX, covariates)
    eta = draws.beta @ Xc.T
    if draws.has_intercept:
        eta = eta + draws.draws[:, :1]
    mu = _response(draws.family, eta)
    alpha = (1.0 - level) / 2.0
    return PredictiveSummary(
        mean=mu.mean(axis=0),
        median=np.quantile(mu, 0.5, axis=0),
        lower=np.quantile(mu, alpha, axis=0),
        upper=np.quantile(mu, 1.0 - alpha, axis=0),
        draws=mu,
    )


def predict_bma(model_draws, newX, covariates, level: float = 0.95) -> PredictiveSummary:
    """Model-averaged predictions: a weighted mixture of per-model draws.

    ``model_draws`` is a sequence of (CoefficientDraws, weight); weights
    are renormalised.  The mixture is realised by weighting each model's
    predictive draws, so the averaged mean is exactly the weighted sum of
    per-model means.
    """
    pairs = list(model_draws)
    if not pairs:
        raise ValueError("at least one model required")
    weights = np.array([w for _, w in pairs], dtype=float)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    weights = weights / weights.sum()
    sums = [predict_glm(dr, newX, covariates, level=level) for dr, _ in pairs]
    all_draws = np.concatenate([s.draws for s in sums], axis=0)
    rep = np.concatenate(
        [np.full(s.draws.shape[0], w / s.draws.shape[0]) for s, w in zip(sums, weights)]
    )
    mean = rep @ all_draws
    # Weighted quantiles over the pooled mixture draws.
    order = np.argsort(all_draws, axis=0)
    qs = np.empty((3, all_draws.shape[1]))
    alpha = (1.0 - level) / 2.0
    for j in range(all_draws.shape[1]):
        w_sorted = rep[order[:, j]]
        cw = np.cumsum(w_sorted)
        v_sorted = all_draws[order[:, j], j]
        qs[:, j] = np.interp([alpha, 0.5, 1.0 - alpha], cw, v_sorted)
    return PredictiveSummary(
        mean=mean, median=qs[1], lower=qs[0], upper=qs[2], draws=all_draws
    )


@dataclass(frozen=True)
class BaselineHazard:
    """Right-continuous cumulative baseline hazard step function."""

    times: np.ndarray
    values: np.ndarray

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return out


def breslow_baseline(ds: Dataset, Xc: np.ndarray, beta) -> BaselineHazard:
    """Aalen-Breslow cumulative baseline hazard given fitted coefficients.

    H0(t) = sum over event times t_i <= t of d_i / sum_{k in risk set}
    w_k exp(x_k' beta), with d_i the (weighted) event count at t_i.
    """
    if ds.family != "cox":
        raise ConfigError("baseline hazard requires the cox family")
    if ds.n_obs < 1:
        raise NoEventsError("no events: baseline hazard undefined")
    beta = np.asarray(beta, dtype=float)
    Xc = np.asarray(Xc, dtype=float)
    eta = Xc @ beta if beta.size else np.zeros(ds.n)
    m = float(np.max(eta)) if eta.size else 0.0
    order = np.argsort(-ds.y, kind="stable")
    t_s = ds.y[order]
    r_s = (ds.w * np.exp(eta - m))[order]
    wd_s = (ds.w * ds.status)[order]
    boundary = np.nonzero(np.diff(t_s))[0]
    ends = np.concatenate([boundary, [t_s.size - 1]])
    starts = np.concatenate([[0], boundary + 1])
    D = np.add.reduceat(wd_s, starts)
    S0 = np.cumsum(r_s)[ends] * np.exp(m)
    keep = D > 0
    times = t_s[ends][keep][::-1]
    increments = (D[keep] / S0[keep])[::-1]
    return BaselineHazard(times=times, values=np.cumsum(increments))


@dataclass(frozen=True)
class SurvivalCurve:
    """Per-draw survival probabilities over a time grid, with summaries."""

    times: np.ndarray
    baseline: BaselineHazard
    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    draws: np.ndarray = field(repr=False)


def survival_curves(
    ds: Dataset,
    draws: CoefficientDraws,
    x_new,
    times=None,
    level: float = 0.95,
) -> SurvivalCurve:
    """Predicted survival curves S(t | x) = exp(-H0(t) exp(x' beta)).

    The baseline hazard is estimated once at the posterior mean of the
    shrunken coefficients; per-draw variation enters through the linear
    predictor.
    """
    if draws.family != "cox":
        raise ConfigError("survival curves require a cox fit")
    beta_bar = draws.beta.mean(axis=0)
    baseline = breslow_baseline(ds, draws.design.Xc, beta_bar)
    if times is None:
        times = np.concatenate([[0.0], baseline.times])
    times = np.asarray(times, dtype=float)
    Xc = draws.design.apply(np.asarray(x_new, dtype=float), ds.covariates)
    if Xc.shape[0] != 1:
        raise DataError("one covariate profile at a time")
    eta = draws.beta @ Xc[0]
    H0 = baseline.at(times)
    surv = np.exp(-np.outer(np.exp(eta), H0))
    alpha = (1.0 - level) / 2.0
    return SurvivalCurve(
        times=times,
        baseline=baseline,
        mean=surv.mean(axis=0),
        median=np.quantile(surv, 0.5, axis=0),
        lower=np.quantile(surv, alpha, axis=0),
        upper=np.quantile(surv, 1.0 - alpha, axis=0),
        draws=surv,
    )
