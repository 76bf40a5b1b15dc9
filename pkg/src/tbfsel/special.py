"""Log-space special function helpers.

The normalising constant of the truncated-inverse-gamma hyperprior needs
``log P(a, x)`` (regularised lower incomplete gamma) for arguments where
the direct value underflows; a power series covers that region and the
scipy implementation the rest.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammainc, gammaln, logsumexp

from .errors import NumericError

_SERIES_MAX_TERMS = 10_000


def log_gammainc_lower(a: float, x: float) -> float:
    """log of the regularised lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return -np.inf
    if x >= a + 1.0:
        # P is bounded away from 0 here; no underflow possible.
        return float(np.log(gammainc(a, x)))
    # gamma(a, x) = x^a e^{-x} sum_k x^k / (a (a+1) ... (a+k))
    term = 1.0 / a
    total = term
    for k in range(1, _SERIES_MAX_TERMS):
        term *= x / (a + k)
        total += term
        if term < total * 1e-17:
            return float(a * np.log(x) - x + np.log(total) - gammaln(a))
    raise NumericError(f"incomplete gamma series failed for a={a}, x={x}")


def log_incig_norm_const(a: float, b: float) -> float:
    """log M(a, b) with M(a, b) = b^a / gamma_lower(a, b); M(a, 0) = a."""
    if a <= 0:
        raise ValueError("a must be positive")
    if b < 0:
        raise ValueError("b must be nonnegative")
    if b == 0.0:
        return float(np.log(a))
    return float(a * np.log(b) - gammaln(a) - log_gammainc_lower(a, b))


def log_trapezoid(log_f: np.ndarray, x: np.ndarray) -> float:
    """Trapezoidal rule on log-scale values; -inf entries contribute zero."""
    log_f = np.asarray(log_f, dtype=float)
    x = np.asarray(x, dtype=float)
    if log_f.shape != x.shape or log_f.size < 2:
        raise ValueError("log_f and x must be equal-length with >= 2 points")
    pair = np.logaddexp(log_f[:-1], log_f[1:]) - np.log(2.0)
    with np.errstate(divide="ignore"):
        log_dx = np.log(np.diff(x))
    return float(logsumexp(pair + log_dx))
