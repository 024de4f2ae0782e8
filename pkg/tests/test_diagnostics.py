import numpy as np
import pytest

from penaltydp.diagnostics import ess, ks_against_analytic, ks_critical, mcse_mean, mcse_var
from penaltydp.models import analytic_posterior


def ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_ess_iid():
    x = np.random.default_rng(0).standard_normal(10**4)
    assert 0.9 <= ess(x) / x.size <= 1.1


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_ess_ar1(rho):
    n = 10**5
    want = (1 - rho) / (1 + rho)
    assert ess(ar1(rho, n, 1)) / n == pytest.approx(want, rel=0.2)


def test_ess_edge_cases():
    assert ess(np.full(500, 3.0)) == 1.0
    with pytest.raises(ValueError):
        ess(np.zeros(50))


def test_mcse_iid():
    x = np.random.default_rng(2).standard_normal(20000)
    assert mcse_mean(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.1)
    # Var of sample variance of N(0,1) is 2/n
    assert mcse_var(x) == pytest.approx(np.sqrt(2 / x.size), rel=0.1)


def test_ks_direction(bern, bern_data):
    post = analytic_posterior(bern, bern_data)
    rng = np.random.default_rng(3)
    # inverse-cdf draws from the truncated posterior
    u = rng.random(10**4)
    lo = post.dist.cdf(post.lower)
    x = post.dist.ppf(lo + u * post.mass)
    assert ks_against_analytic(x, bern, bern_data) < ks_critical(x.size)
    assert ks_critical(10**4) == pytest.approx(1.63 / 100, abs=2e-4)
    assert ks_against_analytic(x + 0.1, bern, bern_data) > 0.1
    assert ks_against_analytic(x, bern, bern_data, thin=10) < ks_critical(x.size // 10)
