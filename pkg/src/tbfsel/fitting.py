"""Maximum likelihood fitting of GLMs and Cox models.

Produces the deviance statistic, coefficient MLEs and observed-information
blocks that the Bayes factor machinery consumes.  Gaussian models profile
out the residual variance so that the deviance reduces to
``-n * log(1 - R^2)``; binomial and Poisson models are fitted by
iteratively reweighted least squares (equivalently Newton, canonical
links); Cox models by Newton iteration on the Breslow partial likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, gammaln

from .data import Dataset
from .errors import (
    ConfigError,
    DataError,
    DegenerateInterceptError,
    NoEventsError,
    NonConvergenceError,
    SingularDesignError,
    ZeroVarianceError,
)
from .modelspec import ModelSpec, build_columns

MAX_ITER = 50
DEVIANCE_RTOL = 1e-10
STEP_RTOL = 1e-8
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class CenteredDesign:
    """Design columns of a model after weighted centering.

    ``Xc.T @ diag(cweights) @ 1 == 0`` columnwise; ``centers`` are the
    weighted column means removed, and ``shifts`` the positivity shifts
    applied to power-transformed covariates.  Both are reused verbatim
    when building prediction designs for new data.
    """

    spec: ModelSpec
    Xc: np.ndarray
    centers: np.ndarray
    cweights: np.ndarray
    names: tuple[str, ...]
    shifts: tuple[tuple[int, float], ...]

    @property
    def d(self) -> int:
        return self.Xc.shape[1]

    def apply(self, Xnew: np.ndarray, covariates) -> np.ndarray:
        """Center new raw covariate rows with the stored transform."""
        from .modelspec import fp_transform

        Xnew = np.asarray(Xnew, dtype=float)
        if Xnew.ndim == 1:
            Xnew = Xnew.reshape(1, -1)
        shifts = dict(self.shifts)
        cols = []
        for k, a in enumerate(self.spec.assignments):
            if a is None:
                continue
            cov = covariates[k]
            if a == "lin":
                for j in cov.columns:
                    cols.append(Xnew[:, j])
            else:
                x = Xnew[:, cov.columns[0]] + shifts.get(k, 0.0)
                if np.any(x <= 0):
                    raise DataError(
                        f"new values for {cov.name} nonpositive after training shift"
                    )
                block = fp_transform(x, a)
                cols.append(block)
        if not cols:
            return np.empty((Xnew.shape[0], 0))
        X = np.column_stack([c if c.ndim > 1 else c.reshape(-1, 1) for c in cols])
        return X - self.centers


@dataclass(frozen=True)
class FitSummary:
    """Deviance, MLEs and observed information of one fitted model."""

    family: str
    z: float
    d: int
    beta_hat: np.ndarray
    info_beta: np.ndarray
    loglik: float
    null_loglik: float
    converged: bool
    iterations: int
    design: CenteredDesign
    alpha_hat: float | None = None
    info_alpha: float | None = None
    sigma2: float | None = None
    r2: float | None = None

    @property
    def has_intercept(self) -> bool:
        return self.family != "cox"


def _centering_weights(ds: Dataset) -> np.ndarray:
    # Binomial trial / observation weights for GLMs; unit weights for Cox.
    # IRLS null weights are proportional to these, so the centered design
    # is identical either way.
    if ds.family == "cox":
        return np.ones(ds.n)
    return np.asarray(ds.w)


def center_design(ds: Dataset, spec: ModelSpec) -> CenteredDesign:
    """Build and weighted-center the design columns of a model.

    Raises :class:`ZeroVarianceError` if any column is constant after
    centering.
    """
    X, names, shifts = build_columns(ds, spec)
    cw = _centering_weights(ds)
    if X.shape[1] == 0:
        return CenteredDesign(
            spec=spec,
            Xc=X,
            centers=np.empty(0),
            cweights=cw,
            names=(),
            shifts=tuple(sorted(shifts.items())),
        )
    centers = (cw @ X) / cw.sum()
    Xc = X - centers
    scale = np.maximum(np.max(np.abs(X), axis=0), 1.0)
    if np.any(np.max(np.abs(Xc), axis=0) <= 1e-10 * scale):
        bad = [names[j] for j in np.where(np.max(np.abs(Xc), axis=0) <= 1e-10 * scale)[0]]
        raise ZeroVarianceError(f"columns constant after centering: {bad}")
    return CenteredDesign(
        spec=spec,
        Xc=Xc,
        centers=centers,
        cweights=cw,
        names=tuple(names),
        shifts=tuple(sorted(shifts.items())),
    )


def _check_rank(design: CenteredDesign) -> None:
    if design.d == 0:
        return
    A = design.Xc * np.sqrt(design.cweights)[:, None]
    r = qr(A, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0 or np.any(diag < RANK_RTOL * diag[0]):
        raise SingularDesignError(
            f"design for {design.spec.label()} is rank deficient"
        )


def _null_alpha(ds: Dataset) -> float:
    sw = ds.w.sum()
    ybar = float(ds.w @ ds.y) / sw
    if ds.family == "gaussian":
        return ybar
    if ds.family == "binomial":
        if ybar <= 0.0 or ybar >= 1.0:
            raise DegenerateInterceptError(
                "binomial intercept undefined: all responses at the same value"
            )
        return float(np.log(ybar / (1.0 - ybar)))
    if ds.family == "poisson":
        if ybar <= 0.0:
            raise DegenerateInterceptError("poisson intercept undefined: mean zero")
        return float(np.log(ybar))
    raise ConfigError("null intercept undefined for cox family")


def glm_loglik(ds: Dataset, alpha: float, beta, design: CenteredDesign) -> float:
    """Log likelihood of a GLM at given coefficients (Gaussian: profiled σ²)."""
    beta = np.asarray(beta, dtype=float)
    eta = alpha + (design.Xc @ beta if design.d else 0.0)
    w, y = ds.w, ds.y
    if ds.family == "gaussian":
        sw = w.sum()
        rss = float(w @ (y - eta) ** 2)
        if rss <= 0.0:
            return np.inf
        sigma2 = rss / sw
        return -0.5 * sw * (np.log(2.0 * np.pi * sigma2) + 1.0)
    if ds.family == "binomial":
        return float(w @ (y * eta - np.logaddexp(0.0, eta)))
    if ds.family == "poisson":
        return float(w @ (y * eta - np.exp(eta) - gammaln(y + 1.0)))
    raise ConfigError(f"glm_loglik does not handle family {ds.family!r}")


def fit_null(ds: Dataset) -> FitSummary:
    """Intercept-only fit (empty fit for Cox); z = 0 and d = 0 by definition."""
    empty = center_design(ds, ModelSpec.null(ds.p))
    if ds.family == "cox":
        if ds.n_obs < 1:
            raise NoEventsError("cox data without any event")
        work = _CoxWork(ds, empty)
        ll0, _, _ = work.loglik_parts(np.empty(0))
        return FitSummary(
            family="cox",
            z=0.0,
            d=0,
            beta_hat=np.empty(0),
            info_beta=np.empty((0, 0)),
            loglik=ll0,
            null_loglik=ll0,
            converged=True,
            iterations=0,
            design=empty,
        )
    alpha = _null_alpha(ds)
    ll0 = glm_loglik(ds, alpha, np.empty(0), empty)
    sw = ds.w.sum()
    if ds.family == "gaussian":
        sigma2 = float(ds.w @ (ds.y - alpha) ** 2) / sw
        if sigma2 <= 0.0:
            raise DataError("response has zero variance")
        info_a = sw / sigma2
    elif ds.family == "binomial":
        mu = expit(alpha)
        info_a = sw * mu * (1.0 - mu)
        sigma2 = None
    else:
        info_a = sw * np.exp(alpha)
        sigma2 = None
    return FitSummary(
        family=ds.family,
        z=0.0,
        d=0,
        beta_hat=np.empty(0),
        info_beta=np.empty((0, 0)),
        loglik=ll0,
        null_loglik=ll0,
        converged=True,
        iterations=0,
        design=empty,
        alpha_hat=alpha,
        info_alpha=info_a,
        sigma2=sigma2,
        r2=0.0 if ds.family == "gaussian" else None,
    )


def fit_glm(ds: Dataset, spec: ModelSpec, design: CenteredDesign | None = None) -> FitSummary:
    """Fit a GLM by IRLS and return deviance, MLEs and information blocks.

    Raises
    ------
    SingularDesignError
        If the centered design is rank deficient.
    NonConvergenceError
        If IRLS does not converge within 50 iterations (e.g. complete
        separation in logistic regression); carries the last iterate.
    """
    if ds.family == "cox":
        raise ConfigError("use fit_cox for the cox family")
    if design is None:
        design = center_design(ds, spec)
    _check_rank(design)
    if design.d == 0:
        return fit_null(ds)
    if ds.family == "gaussian":
        return _fit_gaussian(ds, design)
    return _fit_irls(ds, design)


def _fit_gaussian(ds: Dataset, design: CenteredDesign) -> FitSummary:
    w, y = ds.w, ds.y
    sw = w.sum()
    X1 = np.column_stack([np.ones(ds.n), design.Xc])
    sq = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X1 * sq[:, None], y * sq, rcond=None)
    resid = y - X1 @ coef
    rss = float(w @ resid**2)
    alpha0 = _null_alpha(ds)
    rss0 = float(w @ (y - alpha0) ** 2)
    if rss0 <= 0.0:
        raise DataError("response has zero variance")
    r2 = max(0.0, 1.0 - rss / rss0)
    z = max(0.0, -sw * np.log1p(-r2)) if r2 < 1.0 else np.inf
    sigma2 = rss / sw
    ll = glm_loglik(ds, coef[0], coef[1:], design)
    ll0 = -0.5 * sw * (np.log(2.0 * np.pi * rss0 / sw) + 1.0)
    H = (X1 * w[:, None]).T @ X1 / sigma2
    return FitSummary(
        family="gaussian",
        z=z,
        d=design.d,
        beta_hat=coef[1:],
        info_beta=H[1:, 1:],
        loglik=ll,
        null_loglik=ll0,
        converged=True,
        iterations=1,
        design=design,
        alpha_hat=float(coef[0]),
        info_alpha=float(H[0, 0]),
        sigma2=sigma2,
        r2=r2,
    )


def _irls_weights(ds: Dataset, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if ds.family == "binomial":
        mu = expit(eta)
        return mu, ds.w * mu * (1.0 - mu)
    mu = np.exp(np.minimum(eta, 700.0))
    return mu, ds.w * mu


def _fit_irls(ds: Dataset, design: CenteredDesign) -> FitSummary:
    X1 = np.column_stack([np.ones(ds.n), design.Xc])
    coef = np.zeros(design.d + 1)
    coef[0] = _null_alpha(ds)
    ll0 = glm_loglik(ds, coef[0], coef[1:], design)
    ll = ll0

    def summary(converged, iterations, H):
        return FitSummary(
            family=ds.family,
            z=max(0.0, 2.0 * (ll - ll0)),
            d=design.d,
            beta_hat=coef[1:].copy(),
            info_beta=H[1:, 1:],
            loglik=ll,
            null_loglik=ll0,
            converged=converged,
            iterations=iterations,
            design=design,
            alpha_hat=float(coef[0]),
            info_alpha=float(H[0, 0]),
        )

    H = np.eye(design.d + 1)
    for it in range(1, MAX_ITER + 1):
        eta = X1 @ coef
        mu, ww = _irls_weights(ds, eta)
        grad = X1.T @ (ds.w * (ds.y - mu))
        H = (X1 * ww[:, None]).T @ X1
        try:
            delta = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise NonConvergenceError(
                "IRLS information matrix singular (likely separation)",
                last_fit=summary(False, it, H),
            ) from None
        # Step halving keeps the likelihood monotone.
        ll_new = glm_loglik(ds, coef[0] + delta[0], coef[1:] + delta[1:], design)
        halvings = 0
        while (not np.isfinite(ll_new) or ll_new < ll - 1e-12) and halvings < 30:
            delta *= 0.5
            ll_new = glm_loglik(ds, coef[0] + delta[0], coef[1:] + delta[1:], design)
            halvings += 1
        coef = coef + delta
        if not np.isfinite(ll_new) or np.max(np.abs(coef)) > 1e8:
            ll = ll_new
            raise NonConvergenceError(
                "IRLS diverged (likely separation)", last_fit=summary(False, it, H)
            )
        dev_change = 2.0 * abs(ll_new - ll)
        small_dev = dev_change < DEVIANCE_RTOL * (2.0 * abs(ll_new - ll0) + 0.1)
        small_step = np.max(np.abs(delta)) < STEP_RTOL * (1.0 + np.max(np.abs(coef)))
        ll = ll_new
        if small_dev and small_step:
            eta = X1 @ coef
            _, ww = _irls_weights(ds, eta)
            H = (X1 * ww[:, None]).T @ X1
            return summary(True, it, H)
    raise NonConvergenceError(
        f"IRLS did not converge in {MAX_ITER} iterations",
        last_fit=summary(False, MAX_ITER, H),
    )


class _CoxWork:
    """Sorted views and risk-set bookkeeping for one Cox dataset/design."""

    def __init__(self, ds: Dataset, design: CenteredDesign):
        if ds.family != "cox":
            raise ConfigError("cox machinery requires the cox family")
        if ds.n_obs < 1:
            raise NoEventsError("cox data without any event")
        order = np.argsort(-ds.y, kind="stable")
        self.t = ds.y[order]
        self.delta = ds.status[order]
        self.w = ds.w[order]
        self.X = design.Xc[order]
        self.d = design.d
        # Risk set of an event time = every row at or below the last index
        # of its tie group in this descending order.
        boundary = np.nonzero(np.diff(self.t))[0]
        ends = np.concatenate([boundary, [self.t.size - 1]])
        starts = np.concatenate([[0], boundary + 1])
        wd = self.w * self.delta
        D = np.add.reduceat(wd, starts)
        keep = D > 0
        self.group_ends = ends[keep]
        self.D = D[keep]
        self.event_rows = self.delta > 0
        self.sum_wx_events = (wd[:, None] * self.X).sum(axis=0)
        self.wd = wd

    def loglik_parts(self, beta):
        """Partial log likelihood, score and observed information."""
        beta = np.asarray(beta, dtype=float)
        eta = self.X @ beta if self.d else np.zeros(self.t.size)
        m = np.max(eta) if eta.size else 0.0
        r = self.w * np.exp(eta - m)
        S0 = np.cumsum(r)[self.group_ends]
        ll = float(self.wd @ eta) - float(self.D @ (np.log(S0) + m))
        if self.d == 0:
            return ll, np.empty(0), np.empty((0, 0))
        S1 = np.cumsum(r[:, None] * self.X, axis=0)[self.group_ends]
        S2 = np.cumsum(
            np.einsum("i,ij,ik->ijk", r, self.X, self.X), axis=0
        )[self.group_ends]
        xbar = S1 / S0[:, None]
        grad = self.sum_wx_events - self.D @ xbar
        info = np.einsum("g,gjk->jk", self.D, S2 / S0[:, None, None]) - np.einsum(
            "g,gj,gk->jk", self.D, xbar, xbar
        )
        return ll, grad, info


def fit_cox(
    ds: Dataset,
    spec: ModelSpec,
    design: CenteredDesign | None = None,
    ties: str = "breslow",
) -> FitSummary:
    """Fit a Cox proportional hazards model (Breslow tie handling).

    The deviance is twice the gain in partial log likelihood over the
    empty model; there is no intercept.
    """
    if ds.family != "cox":
        raise ConfigError("fit_cox requires the cox family")
    if ties != "breslow":
        raise ConfigError(f"unsupported ties method {ties!r}; only breslow")
    if design is None:
        design = center_design(ds, spec)
    _check_rank(design)
    work = _CoxWork(ds, design)
    ll0 = work.loglik_parts(np.zeros(design.d))[0]
    if design.d == 0:
        return FitSummary(
            family="cox",
            z=0.0,
            d=0,
            beta_hat=np.empty(0),
            info_beta=np.empty((0, 0)),
            loglik=ll0,
            null_loglik=ll0,
            converged=True,
            iterations=0,
            design=design,
        )
    beta = np.zeros(design.d)
    ll, grad, info = work.loglik_parts(beta)

    def summary(converged, iterations):
        return FitSummary(
            family="cox",
            z=max(0.0, 2.0 * (ll - ll0)),
            d=design.d,
            beta_hat=beta.copy(),
            info_beta=info,
            loglik=ll,
            null_loglik=ll0,
            converged=converged,
            iterations=iterations,
            design=design,
        )

    for it in range(1, MAX_ITER + 1):
        try:
            delta = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise NonConvergenceError(
                "partial likelihood information singular", last_fit=summary(False, it)
            ) from None
        ll_new = work.loglik_parts(beta + delta)[0]
        halvings = 0
        while (not np.isfinite(ll_new) or ll_new < ll - 1e-12) and halvings < 30:
            delta *= 0.5
            ll_new = work.loglik_parts(beta + delta)[0]
            halvings += 1
        beta = beta + delta
        if not np.isfinite(ll_new) or np.max(np.abs(beta)) > 1e8:
            ll = ll_new
            raise NonConvergenceError(
                "Newton diverged (monotone partial likelihood)",
                last_fit=summary(False, it),
            )
        dev_change = 2.0 * abs(ll_new - ll)
        small_dev = dev_change < DEVIANCE_RTOL * (2.0 * abs(ll_new - ll0) + 0.1)
        small_step = np.max(np.abs(delta)) < STEP_RTOL * (1.0 + np.max(np.abs(beta)))
        ll, grad, info = work.loglik_parts(beta)
        if small_dev and small_step:
            return summary(True, it)
    raise NonConvergenceError(
        f"Newton did not converge in {MAX_ITER} iterations",
        last_fit=summary(False, MAX_ITER),
    )


def cox_partial_loglik(ds: Dataset, beta, design: CenteredDesign) -> float:
    """Breslow partial log likelihood at given coefficients."""
    return _CoxWork(ds, design).loglik_parts(np.asarray(beta, dtype=float))[0]


def fit_model(ds: Dataset, spec: ModelSpec, design: CenteredDesign | None = None) -> FitSummary:
    """Family dispatch: :func:`fit_cox` for cox data, else :func:`fit_glm`."""
    if ds.family == "cox":
        return fit_cox(ds, spec, design=design)
    return fit_glm(ds, spec, design=design)


def g_prior_scale_constant(ds: Dataset) -> float:
    """Variance-function constant ``v(h(a)) / h'(a)^2`` at the null intercept.

    Documents the scale linking the coefficient prior to unit information;
    no other routine consumes it, since deviance-based Bayes factors never
    need it explicitly.
    """
    alpha = _null_alpha(ds)
    if ds.family == "gaussian":
        sw = ds.w.sum()
        return float(ds.w @ (ds.y - alpha) ** 2) / sw
    if ds.family == "binomial":
        mu = expit(alpha)
        return float(1.0 / (mu * (1.0 - mu)))
    if ds.family == "poisson":
        return float(1.0 / np.exp(alpha))
    raise ConfigError("no intercept, and hence no scale constant, for cox")
