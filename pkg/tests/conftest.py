import numpy as np
import pytest

from penaltydp.models import Dataset, bernoulli_model, gaussian_mean_model

_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for the acceptance summary."""

    def record(number, passed, detail):
        _CRITERIA[number] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bern():
    return bernoulli_model(a=1.0, b=1.0, theta_min=0.05, theta_max=0.95)


@pytest.fixture(scope="session")
def bern_data():
    # 30 successes out of 100
    return Dataset(np.r_[np.ones(30), np.zeros(70)])


@pytest.fixture(scope="session")
def gauss():
    return gaussian_mean_model(prior_mean=0.0, prior_sd=1.0, lower=-1.0, upper=1.0)


@pytest.fixture(scope="session")
def gauss_data():
    rng = np.random.default_rng(20240101)
    return Dataset(np.clip(rng.normal(0.3, 0.5, size=100), -1.0, 1.0))


def _quad_log_lik(y, theta):
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    return -0.5 * np.sum((y - theta) ** 2, axis=1)


def _flat_prior(theta):
    return 0.0


@pytest.fixture(scope="session")
def quad2():
    """Two-parameter quadratic log-likelihood with a flat prior on [-1, 1]^2."""
    from penaltydp.models import DataSpace, ParamBox, TargetModel

    return TargetModel(
        name="quadratic2",
        param_box=ParamBox([-1.0, -1.0], [1.0, 1.0]),
        data_space=DataSpace([-1.0, -1.0], [1.0, 1.0]),
        log_prior=_flat_prior,
        log_lik_record=_quad_log_lik,
        lipschitz_M=2.0,
    )
