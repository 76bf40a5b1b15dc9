"""AIC/BIC pseudo-posterior model weights, the traditional comparator.

Weights are proportional to exp(-IC/2), computed from IC differences for
stability.  The intercept counts as a parameter for GLM families but not
for Cox models, and the BIC sample size for Cox models is the number of
uncensored observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ICWeighting:
    criterion: str
    values: np.ndarray
    weights: np.ndarray


def ic_weights(fits, criterion: str, n_eff: float | None = None) -> ICWeighting:
    """Information-criterion weights for a collection of fitted models.

    Parameters
    ----------
    fits : sequence of FitSummary
        Fitted models on the same data.
    criterion : str
        ``"aic"`` or ``"bic"``.
    n_eff : float, optional
        Sample size for the BIC penalty; defaults differ by family and
        must be supplied explicitly for BIC (n for GLMs, number of
        events for Cox).
    """
    fits = list(fits)
    if not fits:
        raise DataError("no fits supplied")
    if criterion not in ("aic", "bic"):
        raise ConfigError(f"unknown criterion {criterion!r}")
    if criterion == "bic" and n_eff is None:
        raise ConfigError("bic requires n_eff")
    values = np.empty(len(fits))
    for i, fit in enumerate(fits):
        k = fit.d + (1 if fit.has_intercept else 0)
        if criterion == "aic":
            values[i] = -2.0 * fit.loglik + 2.0 * k
        else:
            values[i] = -2.0 * fit.loglik + np.log(float(n_eff)) * k
    shifted = -(values - values.min()) / 2.0
    weights = np.exp(shifted)
    weights /= weights.sum()
    return ICWeighting(criterion=criterion, values=values, weights=weights)
