"""Target models: prior, i.i.d. likelihood, parameter box and data bounds.

A :class:`TargetModel` bundles the pieces a sampler needs together with the
constants the privacy accountant needs (the per-coordinate bound ``M`` on the
log-likelihood gradient, and for exponential families the l2 sensitivity of
the sufficient statistic). Two built-ins ship with analytic posteriors:
Beta-Bernoulli and a unit-variance Gaussian mean with a Gaussian prior.
"""

from __future__ import annotations

import csv
import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats


class ValidationError(ValueError):
    """Data or parameters outside their declared domain."""


@dataclass(frozen=True)
class ParamBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("box bounds must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise ValidationError("box requires lower < upper in every coordinate")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


@dataclass(frozen=True)
class DataSpace:
    """Per-coordinate record bounds; scalars for scalar records."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or not np.all(lo <= hi):
            raise ValidationError("data space requires lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def record_dim(self) -> int:
        return 1 if self.lower.ndim == 0 else self.lower.size

    def grid(self, points):
        """Grid of records covering the space, shape ``(m,)`` or ``(m, k)``."""
        if self.lower.ndim == 0:
            return np.linspace(self.lower, self.upper, points)
        axes = [np.linspace(lo, hi, points) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)))


@dataclass(frozen=True)
class ExpFamStructure:
    """``p(y|theta) = h(y) g(theta) exp(phi(theta) . S(y))``; ``h`` cancels and is not stored.

    ``phi_lipschitz`` bounds ``|phi(theta') - phi(theta)| / |theta' - theta|``
    on the parameter box, which converts a proposal window in theta into the
    window on natural parameters the exponential-family planner needs.
    """

    suff_stat: Callable  # records (n,) -> (n, d_phi)
    natural_param: Callable  # theta (d,) -> (d_phi,)
    log_g: Callable  # theta (d,) -> float
    suff_stat_l2_sensitivity: float
    phi_lipschitz: float


@dataclass(frozen=True)
class Dataset:
    records: np.ndarray

    def __post_init__(self):
        r = np.array(self.records, dtype=float)
        if r.ndim == 0 or r.shape[0] < 1:
            raise ValidationError("dataset needs at least one record")
        r.flags.writeable = False
        object.__setattr__(self, "records", r)

    @property
    def n(self) -> int:
        return self.records.shape[0]

    @classmethod
    def from_records(cls, records, data_space: DataSpace, on_out_of_bounds="reject"):
        if on_out_of_bounds not in ("reject", "clip"):
            raise ValueError(f"unknown out-of-bounds policy {on_out_of_bounds!r}")
        r = np.array(records, dtype=float)
        if data_space.lower.ndim > 0 and r.ndim == 1:
            r = r[:, None] if data_space.record_dim == 1 else r[None, :]
        bad = (r < data_space.lower) | (r > data_space.upper)
        if r.ndim > 1:
            bad = bad.any(axis=1)
        if np.any(bad):
            if on_out_of_bounds == "clip":
                r = np.clip(r, data_space.lower, data_space.upper)
            else:
                i = int(np.flatnonzero(bad)[0])
                raise ValidationError(f"record {i} lies outside the data space")
        return cls(r)


@dataclass(frozen=True)
class TargetModel:
    name: str
    param_box: ParamBox
    data_space: DataSpace
    log_prior: Callable  # theta (d,) -> float, unnormalised, finite on the box
    log_lik_record: Callable  # (records, theta) -> per-record log-likelihood
    lipschitz_M: float
    expfam: Optional[ExpFamStructure] = None
    hyper: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.param_box.dim

    def log_prior_ratio(self, theta, theta_prime) -> float:
        """``log eta(theta') - log eta(theta)``; ``-inf`` when ``theta'`` leaves the box."""
        if not self.param_box.contains(theta_prime):
            return -np.inf
        return float(self.log_prior(theta_prime) - self.log_prior(theta))

    def check_data(self, data: Dataset) -> None:
        r = data.records
        bad = (r < self.data_space.lower) | (r > self.data_space.upper)
        if np.any(bad):
            raise ValidationError("dataset has records outside the model's data space")


# ---------------------------------------------------------------------------
# operations


def log_lik_diff(model: TargetModel, data: Dataset, theta, theta_prime) -> float:
    """Sum over records of ``log p(y|theta') - log p(y|theta)``."""
    model.check_data(data)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    if not (model.param_box.contains(theta) and model.param_box.contains(theta_prime)):
        raise ValidationError("theta and theta_prime must lie in the parameter box")
    y = data.records
    diff = model.log_lik_record(y, theta_prime) - model.log_lik_record(y, theta)
    return float(np.sum(diff))


def expfam_log_lik_diff(model: TargetModel, n: int, suff_sum, theta, theta_prime) -> float:
    """``n [log g(theta') - log g(theta)] + (phi(theta') - phi(theta)) . suff_sum``."""
    ef = _require_expfam(model)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    dphi = np.asarray(ef.natural_param(theta_prime)) - np.asarray(ef.natural_param(theta))
    return float(n * (ef.log_g(theta_prime) - ef.log_g(theta)) + dphi @ np.asarray(suff_sum))


def suff_stat_sum(model: TargetModel, data: Dataset) -> np.ndarray:
    ef = _require_expfam(model)
    model.check_data(data)
    return np.asarray(ef.suff_stat(data.records), dtype=float).sum(axis=0)


def sensitivity_bound(model: TargetModel, window: float) -> float:
    """Upper bound ``2 d M w`` on the l2 sensitivity of the summed log-likelihood
    difference when every coordinate of the proposal moves by at most ``window``."""
    if window < 0:
        raise ValueError("window must be >= 0")
    return 2.0 * model.dim * window * model.lipschitz_M


def sensitivity_bruteforce(model: TargetModel, theta, theta_prime, grid_points: int = 201) -> float:
    """Grid search for ``max |[l(x,t')-l(x,t)] - [l(y,t')-l(y,t)]|`` over record pairs.

    Datasets one record apart change the summed difference by exactly one
    per-record term, so this is a lower bound on the true sensitivity.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    ys = model.data_space.grid(grid_points)
    per = model.log_lik_record(ys, theta_prime) - model.log_lik_record(ys, theta)
    return float(per.max() - per.min())


def lipschitz_check(model: TargetModel, points: int = 50, h: float = 1e-6) -> float:
    """Largest central-difference ``|d l / d theta_i|`` over a grid; compare with ``lipschitz_M``."""
    ys = model.data_space.grid(points)
    box = model.param_box
    axes = [np.linspace(lo + h, hi - h, points) for lo, hi in zip(box.lower, box.upper)]
    worst = 0.0
    for theta in itertools.product(*axes):
        theta = np.array(theta)
        for i in range(box.dim):
            e = np.zeros(box.dim)
            e[i] = h
            g = (model.log_lik_record(ys, theta + e) - model.log_lik_record(ys, theta - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(g))))
    return worst


def _require_expfam(model):
    if model.expfam is None:
        raise ValueError(f"model {model.name!r} has no exponential-family structure")
    return model.expfam


# ---------------------------------------------------------------------------
# built-in models; callables are module-level partials so models pickle


def _beta_log_prior(theta, a, b):
    t = theta[0]
    return (a - 1.0) * np.log(t) + (b - 1.0) * np.log1p(-t)


def _bernoulli_log_lik(y, theta):
    t = theta[0]
    y = np.asarray(y, dtype=float).reshape(-1)
    return y * np.log(t) + (1.0 - y) * np.log1p(-t)


def _bernoulli_suff(y):
    return np.asarray(y, dtype=float).reshape(-1, 1)


def _logit(theta):
    t = theta[0]
    return np.array([np.log(t) - np.log1p(-t)])


def _bernoulli_log_g(theta):
    return float(np.log1p(-theta[0]))


def _gauss_log_prior(theta, mean, sd):
    return -0.5 * ((theta[0] - mean) / sd) ** 2


def _gauss_log_lik(y, theta):
    y = np.asarray(y, dtype=float).reshape(-1)
    return -0.5 * (y - theta[0]) ** 2


def _identity(theta):
    return np.array([theta[0]], dtype=float)


def _gauss_log_g(theta):
    return float(-0.5 * theta[0] ** 2)


def bernoulli_model(a=1.0, b=1.0, theta_min=0.05, theta_max=0.95) -> TargetModel:
    """Bernoulli likelihood, Beta(a, b) prior truncated to ``[theta_min, theta_max]``."""
    if not 0.0 < theta_min < theta_max < 1.0:
        raise ValidationError("need 0 < theta_min < theta_max < 1")
    if a <= 0 or b <= 0:
        raise ValidationError("Beta prior parameters must be positive")
    M = max(1.0 / theta_min, 1.0 / (1.0 - theta_max))
    phi_lip = max(1.0 / (t * (1.0 - t)) for t in (theta_min, theta_max))
    ef = ExpFamStructure(
        suff_stat=_bernoulli_suff,
        natural_param=_logit,
        log_g=_bernoulli_log_g,
        suff_stat_l2_sensitivity=1.0,
        phi_lipschitz=phi_lip,
    )
    return TargetModel(
        name="bernoulli",
        param_box=ParamBox([theta_min], [theta_max]),
        data_space=DataSpace(0.0, 1.0),
        log_prior=functools.partial(_beta_log_prior, a=float(a), b=float(b)),
        log_lik_record=_bernoulli_log_lik,
        lipschitz_M=M,
        expfam=ef,
        hyper={"a": float(a), "b": float(b)},
    )


def gaussian_mean_model(prior_mean=0.0, prior_sd=1.0, lower=-1.0, upper=1.0,
                        data_lower=-1.0, data_upper=1.0) -> TargetModel:
    """Unit-variance Gaussian likelihood for the mean, N(prior_mean, prior_sd^2) prior on a box."""
    if prior_sd <= 0:
        raise ValidationError("prior_sd must be positive")
    M = max(abs(data_upper - lower), abs(upper - data_lower))
    ef = ExpFamStructure(
        suff_stat=_bernoulli_suff,  # S(y) = y
        natural_param=_identity,
        log_g=_gauss_log_g,
        suff_stat_l2_sensitivity=float(data_upper - data_lower),
        phi_lipschitz=1.0,
    )
    return TargetModel(
        name="gaussian_mean",
        param_box=ParamBox([lower], [upper]),
        data_space=DataSpace(data_lower, data_upper),
        log_prior=functools.partial(_gauss_log_prior, mean=float(prior_mean), sd=float(prior_sd)),
        log_lik_record=_gauss_log_lik,
        lipschitz_M=float(M),
        expfam=ef,
        hyper={"prior_mean": float(prior_mean), "prior_sd": float(prior_sd)},
    )


BUILTINS = {"bernoulli": bernoulli_model, "gaussian_mean": gaussian_mean_model}


def build_model(spec: dict) -> TargetModel:
    """Build a built-in model from ``{"name": ..., **hyperparameters}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in BUILTINS:
        raise ValidationError(f"unknown model {name!r}; expected one of {sorted(BUILTINS)}")
    return BUILTINS[name](**spec)


# ---------------------------------------------------------------------------
# analytic posteriors


@dataclass(frozen=True)
class AnalyticPosterior:
    """Conjugate posterior ``dist`` restricted to ``[lower, upper]``."""

    family: str
    params: dict
    dist: object  # frozen scipy.stats distribution, untruncated
    lower: float
    upper: float
    mass: float
    mean: float
    var: float

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        return (self.dist.cdf(x) - self.dist.cdf(self.lower)) / self.mass

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        return np.where(inside, self.dist.pdf(x) / self.mass, 0.0)


def analytic_posterior(model: TargetModel, data: Dataset) -> AnalyticPosterior:
    model.check_data(data)
    y = data.records.reshape(-1)
    n, s = y.size, float(y.sum())
    if model.name == "bernoulli":
        a, b = model.hyper["a"] + s, model.hyper["b"] + n - s
        dist, family, params = stats.beta(a, b), "beta", {"a": a, "b": b}
    elif model.name == "gaussian_mean":
        m0, s0 = model.hyper["prior_mean"], model.hyper["prior_sd"]
        prec = 1.0 / s0**2 + n
        mean = (m0 / s0**2 + s) / prec
        dist = stats.norm(mean, np.sqrt(1.0 / prec))
        family, params = "normal", {"mean": mean, "var": 1.0 / prec}
    else:
        raise ValueError(f"no analytic posterior for model {model.name!r}")
    lo, hi = float(model.param_box.lower[0]), float(model.param_box.upper[0])
    return AnalyticPosterior(family, params, dist, lo, hi, *_truncated_moments(dist, lo, hi))


def _truncated_moments(dist, lo, hi):
    centre = float(np.clip(dist.mean(), lo, hi))
    pts = [centre] if lo < centre < hi else None

    def q(f):
        return integrate.quad(f, lo, hi, points=pts, epsabs=1e-14, epsrel=1e-12, limit=200)[0]

    mass = q(dist.pdf)
    mean = q(lambda x: x * dist.pdf(x)) / mass
    var = q(lambda x: (x - mean) ** 2 * dist.pdf(x)) / mass
    return mass, mean, var


# ---------------------------------------------------------------------------
# CSV data files


def load_csv(path, data_space: DataSpace, on_out_of_bounds="reject") -> Dataset:
    """Read a header-``y`` (or ``y1,...,yk``) CSV file into a validated :class:`Dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        k = len(header)
        expected = ["y"] if k == 1 else [f"y{i}" for i in range(1, k + 1)]
        if header != expected:
            raise ValidationError(f"{path}: header must be {','.join(expected)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k:
                raise ValidationError(f"{path}:{lineno}: expected {k} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric field") from None
    arr = np.array(rows, dtype=float)
    if k == 1:
        arr = arr.reshape(-1)
    return Dataset.from_records(arr, data_space, on_out_of_bounds)


def save_csv(path, data: Dataset) -> None:
    r = data.records
    with open(path, "w", newline="") as fh:
        if r.ndim == 1:
            fh.write("y\n")
            fh.writelines(f"{v:.17g}\n" for v in r)
        else:
            fh.write(",".join(f"y{i}" for i in range(1, r.shape[1] + 1)) + "\n")
            fh.writelines(",".join(f"{v:.17g}" for v in row) + "\n" for row in r)
