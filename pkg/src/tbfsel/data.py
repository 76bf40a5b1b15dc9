"""Immutable dataset container shared by all fitting and search routines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

FAMILIES = ("gaussian", "binomial", "poisson", "cox")


@dataclass(frozen=True)
class Covariate:
    """One candidate covariate, possibly spanning several design columns.

    A categorical covariate owns all of its dummy columns, which are always
    included or excluded together.  ``fp_eligible`` marks continuous
    covariates that may receive power transformations during function
    selection.
    """

    name: str
    columns: tuple[int, ...]
    kind: str = "continuous"  # continuous | binary | categorical
    fp_eligible: bool = False


@dataclass(frozen=True)
class Dataset:
    """Response, covariate matrix, weights and (for Cox) event indicators.

    Arrays are stored read-only so a single instance can be shared across
    concurrent model evaluations.  Use :func:`make_dataset` to construct
    with validation.
    """

    y: np.ndarray
    X: np.ndarray
    family: str
    w: np.ndarray
    status: np.ndarray | None = None
    covariates: tuple[Covariate, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_obs(self) -> int:
        """Number of uncensored observations (Cox), else n."""
        if self.family == "cox":
            return int(np.sum(self.status))
        return self.n

    @property
    def n_eff(self) -> int:
        """Effective sample size for sample-size-dependent priors."""
        return self.n_obs

    @property
    def p(self) -> int:
        """Number of candidate covariates (not design columns)."""
        return len(self.covariates)

    def subset(self, rows: np.ndarray) -> "Dataset":
        """New dataset restricted to (or resampled over) the given rows."""
        return Dataset(
            y=_ro(self.y[rows]),
            X=_ro(self.X[rows]),
            family=self.family,
            w=_ro(self.w[rows]),
            status=None if self.status is None else _ro(self.status[rows]),
            covariates=self.covariates,
        )


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def make_dataset(y, X, family, w=None, status=None, covariates=None) -> Dataset:
    """Validate inputs and build an immutable :class:`Dataset`.

    Parameters
    ----------
    y : array (n,)
        Response; survival times for the Cox family.
    X : array (n, q)
        Covariate matrix (q design columns before model selection).
    family : str
        One of ``gaussian``, ``binomial``, ``poisson``, ``cox``.
    w : array (n,), optional
        Positive observation weights, default all ones.
    status : array (n,), optional
        Event indicator (1 = event, 0 = censored); required for Cox.
    covariates : sequence of Covariate, optional
        Grouping of design columns into candidate covariates; by default
        every column is its own continuous covariate.
    """
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}; expected one of {FAMILIES}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = y.shape[0]
    if X.shape[0] != n:
        raise DataError(f"X has {X.shape[0]} rows but y has {n}")
    if w is None:
        w = np.ones(n)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != n:
        raise DataError(f"w has {w.shape[0]} entries but y has {n}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)) or not np.all(np.isfinite(w)):
        raise DataError("y, X and w must be finite")
    if np.any(w <= 0):
        raise DataError("weights must be positive")

    if family == "binomial" and (np.any(y < 0) or np.any(y > 1)):
        raise DataError("binomial response must lie in [0, 1]")
    if family == "poisson" and np.any(y < 0):
        raise DataError("poisson response must be nonnegative")

    if family == "cox":
        if status is None:
            raise DataError("cox family requires a status vector")
        status = np.asarray(status, dtype=float).ravel()
        if status.shape[0] != n:
            raise DataError(f"status has {status.shape[0]} entries but y has {n}")
        if not np.all(np.isin(status, (0.0, 1.0))):
            raise DataError("status must contain only 0 (censored) and 1 (event)")
        if np.any(y < 0):
            raise DataError("survival times must be nonnegative")
    else:
        status = None

    if covariates is None:
        covariates = tuple(
            Covariate(name=f"x{j + 1}", columns=(j,)) for j in range(X.shape[1])
        )
    else:
        covariates = tuple(covariates)
        seen = [c for cov in covariates for c in cov.columns]
        if sorted(seen) != sorted(set(seen)) or (seen and max(seen) >= X.shape[1]):
            raise DataError("covariate column indices must be unique and in range")

    return Dataset(
        y=_ro(y),
        X=_ro(X),
        family=family,
        w=_ro(w),
        status=None if status is None else _ro(status),
        covariates=covariates,
    )
