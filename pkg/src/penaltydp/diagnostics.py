"""Chain diagnostics: effective sample size, Monte Carlo standard errors, KS."""

import numpy as np
from scipy import stats

from .models import analytic_posterior


def _autocorr(x):
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def ess(samples) -> float:
    """Effective sample size by Geyer's initial monotone positive sequence.

    Sums of adjacent autocorrelation pairs are accumulated while positive and
    forced non-increasing. The result is capped at the number of samples; a
    constant chain has ESS 1.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    n = x.size
    if n < 100:
        raise ValueError("ess needs at least 100 samples")
    if np.ptp(x) == 0:
        return 1.0
    rho = _autocorr(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    stop = np.flatnonzero(pairs <= 0)
    pairs = pairs[: stop[0]] if stop.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(min(n, n / tau)) if tau > 0 else float(n)


def mcse_mean(samples) -> float:
    x = np.asarray(samples, dtype=float).reshape(-1)
    return float(x.std(ddof=1) / np.sqrt(ess(x)))


def mcse_var(samples) -> float:
    """Standard error of the sample variance, from the ESS of squared deviations."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    sq = (x - x.mean()) ** 2
    return float(sq.std(ddof=1) / np.sqrt(ess(sq)))


def ks_against_analytic(samples, model, data, thin=1) -> float:
    """KS distance between the thinned samples and the truncated conjugate posterior."""
    post = analytic_posterior(model, data)
    x = np.asarray(samples, dtype=float).reshape(-1)[::thin]
    return float(stats.kstest(x, post.cdf).statistic)


def ks_critical(m, level=0.01) -> float:
    """Asymptotic one-sample KS critical value for ``m`` i.i.d. samples."""
    return float(stats.kstwobign.isf(level) / np.sqrt(m))
