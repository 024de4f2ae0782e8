"""Privacy accounting for penalty chains.

Each iteration releases one Gaussian-mechanism output (the noisy summed
log-likelihood difference, or a noisy sufficient statistic), so a run of
``k`` iterations is a k-fold adaptive composition of one mechanism class.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.special import ndtr

_SAFETY = 1.0 + 1e-9


class RegimeError(ValueError):
    """The Gaussian-mechanism bound is only valid for epsilon in (0, 1)."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")


def gaussian_sigma(l2_sensitivity: float, target: PrivacyParams) -> float:
    """Noise scale for an (eps, delta)-DP Gaussian mechanism.

    Returns ``sens * sqrt(2 ln(1.25/delta)) / eps`` nudged up by a relative
    1e-9 so the required strict inequality holds.
    """
    eps, delta = target.epsilon, target.delta
    if not 0.0 < eps < 1.0:
        raise RegimeError(f"epsilon must lie in (0, 1), got {eps}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if l2_sensitivity <= 0:
        raise ValueError("l2_sensitivity must be positive")
    return _SAFETY * l2_sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def gaussian_mechanism_privacy(sigma: float, l2_sensitivity: float, delta: float) -> float:
    """Epsilon certified for noise ``sigma`` at a given ``delta`` (inverse of :func:`gaussian_sigma`)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    eps = l2_sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / sigma
    if eps >= 1.0:
        raise RegimeError(f"epsilon {eps:.6g} >= 1: outside the validity range of the bound")
    return eps


def advanced_composition(per_step: PrivacyParams, k: int, delta_prime: float) -> PrivacyParams:
    """k-fold adaptive composition: ``eps' = sqrt(2k ln(1/delta')) eps + k eps (e^eps - 1)``,
    total delta ``k delta + delta'``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if delta_prime <= 0:
        raise ValueError("delta_prime must be positive")
    eps = per_step.epsilon
    eps_total = math.sqrt(2.0 * k * math.log(1.0 / delta_prime)) * eps + k * eps * math.expm1(eps)
    return PrivacyParams(eps_total, min(1.0, k * per_step.delta + delta_prime))


def exact_gaussian_delta(epsilon: float, l2_sensitivity: float, sigma: float) -> float:
    """Smallest delta at which one Gaussian-mechanism call is (epsilon, delta)-DP.

    Exact privacy-loss tail for N(0, s^2) against N(sens, s^2):
    ``Phi(sens/(2s) - eps s/sens) - e^eps Phi(-sens/(2s) - eps s/sens)``.
    """
    if sigma <= 0 or l2_sensitivity <= 0:
        raise ValueError("sigma and l2_sensitivity must be positive")
    a = l2_sensitivity / (2.0 * sigma)
    b = epsilon * sigma / l2_sensitivity
    return float(max(0.0, ndtr(a - b) - math.exp(epsilon) * ndtr(-a - b)))


# ---------------------------------------------------------------------------
# planner


def _sigma_maximand(m: int, c: float, alpha: float, beta_p: float) -> float:
    return c * m ** (-alpha) * math.sqrt(2.0 * beta_p * math.log(m))


def plan_sigma(c: float, alpha: float, beta_p: float, patience: int = 10) -> float:
    """``(1 + 1e-9) * max_{m >= 1} c m^-alpha sqrt(2 beta_p ln m)``.

    ``ln(m) / m^(2 alpha)`` rises to a single peak at ``m = e^(1/(2 alpha))``
    and decreases afterwards, so once the scan is past that point the first
    run of ``patience`` consecutive non-improvements is final.
    """
    peak = math.exp(1.0 / (2.0 * alpha))
    best, m, stale = 0.0, 1, 0
    while True:
        val = _sigma_maximand(m, c, alpha, beta_p)
        if val > best:
            best, stale = val, 0
        else:
            stale += 1
        if stale >= patience and m > peak:
            return _SAFETY * best
        m += 1


def iterations_for(n: int, alpha: float, k0: float) -> int:
    """``floor(k0 n^(2 alpha) / ln n)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return int(math.floor(k0 * n ** (2.0 * alpha) / math.log(n)))


@dataclass(frozen=True)
class PrivacyPlan:
    n: int
    alpha: float
    c: float
    beta: float
    k0: float
    sigma: float
    k_n: int
    eps_bound: float
    delta_bound: float
    per_call_eps: float
    per_call_delta: float
    eps_direct: float
    delta_direct: float
    eps_bound_corrected: float

    def to_dict(self):
        return asdict(self)

    def report(self):
        """The accountant's JSON-ready summary."""
        keys = ("sigma", "k_n", "eps_bound", "delta_bound", "eps_direct", "delta_direct",
                "per_call_eps", "per_call_delta", "eps_bound_corrected")
        return {k: getattr(self, k) for k in keys}


def make_plan(n: int, alpha: float, c: float, beta: float, k0: float) -> PrivacyPlan:
    """Noise level, iteration budget and (eps, delta) for a chain on ``n`` records.

    ``c`` is the sensitivity constant: every mechanism call has l2 sensitivity
    at most ``c n^-alpha``. The closed-form ``eps_bound``/``delta_bound`` are
    reported alongside ``eps_direct``/``delta_direct`` from composing the
    per-call guarantee exactly over ``k_n`` calls. Substituting
    ``k = k0 n^(2 alpha) / ln n`` into the composition leaves a factor
    ``sqrt(ln n)`` on the first term, which ``eps_bound`` omits;
    ``eps_bound_corrected`` keeps it and always dominates ``eps_direct``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    for name, v in (("alpha", alpha), ("c", c), ("beta", beta), ("k0", k0)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    beta_p = 2.0 * alpha + beta
    sigma = plan_sigma(c, alpha, beta_p)
    k_n = iterations_for(n, alpha, k0)
    ln_n = math.log(n)

    per_eps = (c / sigma) * n ** (-alpha) * math.sqrt(2.0 * beta_p * ln_n)
    if per_eps >= 1.0:
        raise RegimeError(f"per-call epsilon {per_eps:.6g} >= 1")
    per_delta = 1.25 * n ** (-beta_p)

    lead = 2.0 * math.sqrt(k0 * beta_p * beta) * c / sigma
    quad = 4.0 * k0 * (c / sigma) ** 2 * beta_p
    eps_bound = lead + quad
    delta_bound = 1.25 * k0 * n ** (-beta) / ln_n + n ** (-beta)

    if k_n >= 1:
        direct = advanced_composition(PrivacyParams(per_eps, per_delta), k_n, n ** (-beta))
        eps_direct, delta_direct = direct.epsilon, direct.delta
    else:
        eps_direct, delta_direct = 0.0, 0.0

    return PrivacyPlan(
        n=n, alpha=alpha, c=c, beta=beta, k0=k0, sigma=sigma, k_n=k_n,
        eps_bound=eps_bound, delta_bound=delta_bound,
        per_call_eps=per_eps, per_call_delta=per_delta,
        eps_direct=eps_direct, delta_direct=delta_direct,
        eps_bound_corrected=lead * math.sqrt(ln_n) + quad,
    )


@dataclass(frozen=True)
class ExpFamPlan:
    base: PrivacyPlan
    s_sensitivity: float
    xi_n: float

    @property
    def variance_cap(self) -> float:
        """Largest penalty variance any admissible proposal can produce."""
        return self.s_sensitivity**2 * self.base.sigma**2


def make_expfam_plan(plan: PrivacyPlan, s_sensitivity: float) -> ExpFamPlan:
    """Noise variance for the released sufficient statistic:
    ``xi_n = sigma^2 sens_S^2 n^(2 alpha) / c^2``. Privacy is that of ``plan``;
    here ``plan.c`` bounds the natural-parameter step ``|phi(t') - phi(t)| n^alpha``."""
    if s_sensitivity <= 0:
        raise ValueError("s_sensitivity must be positive")
    xi = plan.sigma**2 * s_sensitivity**2 * plan.n ** (2.0 * plan.alpha) / plan.c**2
    return ExpFamPlan(plan, s_sensitivity, xi)
