"""Compiled chain loops for the scalar built-in models.

Randomness is drawn by the caller from the named streams and passed in as
arrays (proposal displacements, accept uniforms, standard normals), so the
compiled loop and the pure-Python step functions consume identical numbers.
"""

import numpy as np

from ._accel import jit

KIND_BERNOULLI = 0
KIND_GAUSSIAN_MEAN = 1

MODE_MH = 0
MODE_PENALTY = 1
MODE_EXPFAM = 2


@jit
def _log_prior(kind, t, p0, p1):
    if kind == KIND_BERNOULLI:
        return (p0 - 1.0) * np.log(t) + (p1 - 1.0) * np.log1p(-t)
    z = (t - p0) / p1
    return -0.5 * z * z


@jit
def _log_g(kind, t):
    if kind == KIND_BERNOULLI:
        return np.log1p(-t)
    return -0.5 * t * t


@jit
def _phi(kind, t):
    if kind == KIND_BERNOULLI:
        return np.log(t) - np.log1p(-t)
    return t


@jit
def chain_kernel(kind, p0, p1, lower, upper, n, s_n, theta0, disp, u, z, mode, sigma, xi):
    """Run ``disp.shape[0]`` iterations from ``theta0``.

    Returns ``(theta, theta_prev, theta_prop, noisy_d, noisy_stat, sigma2,
    accepted, noise_used)``. Rejected-by-box iterations carry NaN in the
    noise columns and consume no normal draw.
    """
    k = disp.shape[0]
    theta = np.empty(k)
    prev = np.empty(k)
    prop = np.empty(k)
    noisy_d = np.full(k, np.nan)
    noisy_stat = np.full(k, np.nan)
    sig2 = np.full(k, np.nan)
    acc = np.zeros(k, dtype=np.bool_)
    var = sigma * sigma
    sd_xi = np.sqrt(xi)
    cur = theta0
    zi = 0
    for t in range(k):
        tp = cur + disp[t]
        prev[t] = cur
        prop[t] = tp
        if lower <= tp <= upper:
            lp = _log_prior(kind, tp, p0, p1) - _log_prior(kind, cur, p0, p1)
            dlogg = n * (_log_g(kind, tp) - _log_g(kind, cur))
            dphi = _phi(kind, tp) - _phi(kind, cur)
            if mode == MODE_MH:
                dh = dlogg + dphi * s_n
                s2 = 0.0
            elif mode == MODE_PENALTY:
                dh = dlogg + dphi * s_n + sigma * z[zi]
                zi += 1
                s2 = var
            else:
                shat = s_n + sd_xi * z[zi]
                zi += 1
                noisy_stat[t] = shat
                dh = dlogg + dphi * shat
                s2 = dphi * dphi * xi
            noisy_d[t] = dh
            sig2[t] = s2
            if np.log(u[t]) < lp + dh - 0.5 * s2:
                cur = tp
                acc[t] = True
        theta[t] = cur
    return theta, prev, prop, noisy_d, noisy_stat, sig2, acc, zi
