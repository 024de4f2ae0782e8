"""Acceptance probabilities for the exact MH kernel and the penalty kernel.

``lam`` is always the natural-log acceptance ratio and ``sigma`` the standard
deviation of its Gaussian estimate. All functions broadcast over numpy
arrays and return a Python float for scalar input.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _finite(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


def _sigma(sigma):
    s = _finite(sigma, "sigma")
    if np.any(s < 0):
        raise ValueError("sigma must be >= 0")
    return s


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def norm_cdf(x):
    """Standard normal CDF (erfc based, accurate far into both tails)."""
    return _out(ndtr(np.asarray(x, dtype=float)))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / _SQRT_2PI)


def mh_acceptance(lam):
    """``min(1, exp(lam))``."""
    lam = _finite(lam, "lam")
    return _out(np.exp(np.minimum(lam, 0.0)))


def penalty_acceptance_realized(lambda_hat, sigma):
    """Acceptance probability for one noisy draw: ``min(1, exp(lambda_hat - sigma**2 / 2))``."""
    lh = _finite(lambda_hat, "lambda_hat")
    s = _sigma(sigma)
    return _out(np.exp(np.minimum(lh - 0.5 * s * s, 0.0)))


def expected_penalty_acceptance(lam, sigma):
    """Mean acceptance of the penalty kernel when the estimate is N(lam, sigma**2).

    Closed form ``Phi(lam/s - s/2) + exp(lam) * Phi(-lam/s - s/2)``. The second
    term is evaluated as ``exp(lam + log Phi(.))`` so large ``|lam|`` cannot
    overflow. ``sigma == 0`` falls back to the MH acceptance.
    """
    lam = _finite(lam, "lam")
    s = _sigma(sigma)
    lam, s = np.broadcast_arrays(lam, s)
    zero = s == 0.0
    s_safe = np.where(zero, 1.0, s)
    upper = lam / s_safe - 0.5 * s_safe
    lower = -lam / s_safe - 0.5 * s_safe
    val = ndtr(upper) + np.exp(lam + log_ndtr(lower))
    val = np.where(zero, np.exp(np.minimum(lam, 0.0)), np.minimum(val, 1.0))
    return _out(val)


def expected_penalty_acceptance_dsigma(lam, sigma):
    """Derivative of :func:`expected_penalty_acceptance` in ``sigma``: ``-phi(s/2 - lam/s)``.

    Strictly negative for ``sigma > 0``.
    """
    lam = _finite(lam, "lam")
    s = _sigma(sigma)
    if np.any(s == 0):
        raise ValueError("derivative is defined for sigma > 0 only")
    return _out(-np.asarray(norm_pdf(0.5 * s - lam / s)))


def kappa_lower_bound(B):
    """Minorisation constant ``1 - Phi(B/2)`` for noise variances bounded by ``B``.

    ``expected_penalty_acceptance(lam, s) >= kappa * mh_acceptance(lam)``
    whenever ``s**2 <= B``.
    """
    B = _finite(B, "B")
    if np.any(B < 0):
        raise ValueError("B must be >= 0")
    return _out(ndtr(-0.5 * B))
