"""Chain engines: exact MH, the penalty kernel, and the penalty kernel fed by
noisy sufficient statistics.

Every iteration draws a proposal displacement and an accept uniform. An
in-box proposal also makes exactly one call to the data mechanism (one
normal draw, or ``d_phi`` draws in exponential-family mode); out-of-box
proposals are rejected from the prior alone and never touch the data.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .diagnostics import ess
from .models import Dataset, TargetModel, suff_stat_sum
from .rng import ChainStreams

MODES = ("mh", "penalty", "expfam")
_KERNEL_KINDS = {"bernoulli": _kernels.KIND_BERNOULLI, "gaussian_mean": _kernels.KIND_GAUSSIAN_MEAN}
_KERNEL_MODES = {"mh": _kernels.MODE_MH, "penalty": _kernels.MODE_PENALTY, "expfam": _kernels.MODE_EXPFAM}


@dataclass(frozen=True)
class ProposalKernel:
    """Uniform random walk, each coordinate moved by at most ``half_width``."""

    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @classmethod
    def from_window(cls, c_prop, n, alpha=0.5):
        """Window ``c_prop * n**-alpha``."""
        return cls(c_prop * n ** (-alpha))


def propose(kernel: ProposalKernel, theta, rng) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    w = kernel.half_width
    return theta + rng.uniform(-w, w, size=theta.shape)


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    iter: int = 0


@dataclass(frozen=True)
class TranscriptEntry:
    iter: int
    theta_prev: np.ndarray
    theta_proposed: np.ndarray
    noisy_d: object  # float, tuple of per-party floats, or None when no data was touched
    sigma2_used: Optional[float]
    accepted: bool
    noisy_stat: Optional[np.ndarray] = None


class Transcript:
    """Column store of the adversary's view, one row per iteration."""

    def __init__(self, iters, theta_prev, theta_prop, noisy_d, sigma2, accepted, noisy_stat=None):
        self.iters = np.asarray(iters, dtype=np.int64)
        self.theta_prev = np.asarray(theta_prev, dtype=float)
        self.theta_prop = np.asarray(theta_prop, dtype=float)
        self.noisy_d = np.asarray(noisy_d, dtype=float)
        self.sigma2 = np.asarray(sigma2, dtype=float)
        self.accepted = np.asarray(accepted, dtype=bool)
        self.noisy_stat = None if noisy_stat is None else np.asarray(noisy_stat, dtype=float)

    def __len__(self):
        return self.iters.size

    @classmethod
    def from_entries(cls, entries):
        entries = list(entries)
        width = max((len(e.noisy_d) for e in entries if isinstance(e.noisy_d, tuple)), default=0)

        def noisy(e):
            if e.noisy_d is None:
                return [np.nan] * width if width else np.nan
            return list(e.noisy_d) if width else e.noisy_d

        stats = None
        if any(e.noisy_stat is not None for e in entries):
            dim = next(e.noisy_stat.size for e in entries if e.noisy_stat is not None)
            stats = [e.noisy_stat if e.noisy_stat is not None else np.full(dim, np.nan) for e in entries]
        return cls(
            [e.iter for e in entries],
            [e.theta_prev for e in entries],
            [e.theta_proposed for e in entries],
            [noisy(e) for e in entries],
            [np.nan if e.sigma2_used is None else e.sigma2_used for e in entries],
            [e.accepted for e in entries],
            stats,
        )

    def entries(self):
        for i in range(len(self)):
            d = self.noisy_d[i]
            if d.ndim:
                d = None if np.all(np.isnan(d)) else tuple(float(v) for v in d)
            else:
                d = None if np.isnan(d) else float(d)
            s2 = float(self.sigma2[i])
            stat = None if self.noisy_stat is None or np.all(np.isnan(self.noisy_stat[i])) else self.noisy_stat[i]
            yield TranscriptEntry(int(self.iters[i]), self.theta_prev[i], self.theta_prop[i], d,
                                  None if math.isnan(s2) else s2, bool(self.accepted[i]), stat)

    def mechanism_calls(self) -> int:
        d = self.noisy_d if self.noisy_d.ndim == 1 else self.noisy_d[:, 0]
        return int(np.count_nonzero(~np.isnan(d)))

    def __eq__(self, other):
        if not isinstance(other, Transcript):
            return NotImplemented
        same = all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
            for f in ("iters", "theta_prev", "theta_prop", "noisy_d", "sigma2")
        )
        same = same and np.array_equal(self.accepted, other.accepted)
        if (self.noisy_stat is None) != (other.noisy_stat is None):
            return False
        if self.noisy_stat is not None:
            same = same and np.array_equal(self.noisy_stat, other.noisy_stat, equal_nan=True)
        return same


@dataclass(frozen=True)
class PenaltyConfig:
    sigma: float = 0.0
    iterations: int = 1000
    burn_in: Optional[int] = None
    thin: int = 1
    xi: Optional[float] = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.iterations // 10)
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def check_mode(self, mode):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "penalty" and not self.sigma > 0:
            raise ValueError("penalty mode requires sigma > 0")
        if mode == "expfam" and not (self.xi is not None and self.xi > 0):
            raise ValueError("expfam mode requires xi > 0")


# ---------------------------------------------------------------------------
# single steps


def _log_u(rng):
    u = rng.random()
    return math.log(u) if u > 0 else -math.inf


def _dn(model, data, theta, theta_prime):
    y = data.records
    return float(np.sum(model.log_lik_record(y, theta_prime) - model.log_lik_record(y, theta)))


def _start(model, kernel, state, rng):
    theta = np.atleast_1d(np.asarray(state.theta, dtype=float))
    prop = propose(kernel, theta, rng.proposal)
    log_u = _log_u(rng.accept)
    return theta, prop, log_u, model.log_prior_ratio(theta, prop)


def _finish(state, theta, prop, accepted, noisy_d, s2, stat=None):
    t = state.iter + 1
    new = ChainState(prop if accepted else theta, t)
    return new, TranscriptEntry(t, theta, prop, noisy_d, s2, accepted, stat)


def mh_step(model: TargetModel, data: Dataset, kernel: ProposalKernel, state: ChainState, rng: ChainStreams):
    """Exact MH transition; the transcript carries the noiseless difference."""
    theta, prop, log_u, lp = _start(model, kernel, state, rng)
    if lp == -math.inf:
        return _finish(state, theta, prop, False, None, None)
    d = _dn(model, data, theta, prop)
    return _finish(state, theta, prop, log_u < lp + d, d, 0.0)


def penalty_step(model, data, kernel, state, config: PenaltyConfig, rng: ChainStreams):
    """Release ``d + sigma z`` and accept with ``min(1, prior ratio * exp(d_hat - sigma^2/2))``."""
    if not config.sigma > 0:
        raise ValueError("penalty_step requires sigma > 0")
    theta, prop, log_u, lp = _start(model, kernel, state, rng)
    if lp == -math.inf:
        return _finish(state, theta, prop, False, None, None)
    s2 = config.sigma**2
    d_hat = _dn(model, data, theta, prop) + config.sigma * rng.noise.standard_normal()
    return _finish(state, theta, prop, log_u < lp + d_hat - 0.5 * s2, d_hat, s2)


def expfam_step(model, data, kernel, state, xi: float, rng: ChainStreams, suff_sum=None):
    """Penalty step driven by a fresh noisy sufficient statistic ``S_hat ~ N(S_n, xi I)``.

    The penalty variance is ``|phi(theta') - phi(theta)|^2 xi``, the exact
    variance of the resulting log-likelihood-difference estimate.
    """
    ef = model.expfam
    if ef is None:
        raise ValueError(f"model {model.name!r} has no exponential-family structure")
    if not xi > 0:
        raise ValueError("xi must be positive")
    if suff_sum is None:
        suff_sum = suff_stat_sum(model, data)
    theta, prop, log_u, lp = _start(model, kernel, state, rng)
    if lp == -math.inf:
        return _finish(state, theta, prop, False, None, None)
    suff_sum = np.asarray(suff_sum, dtype=float)
    s_hat = suff_sum + math.sqrt(xi) * rng.noise.standard_normal(suff_sum.shape)
    dphi = np.asarray(ef.natural_param(prop)) - np.asarray(ef.natural_param(theta))
    d_hat = float(data.n * (ef.log_g(prop) - ef.log_g(theta)) + dphi @ s_hat)
    s2 = float(dphi @ dphi) * xi
    return _finish(state, theta, prop, log_u < lp + d_hat - 0.5 * s2, d_hat, s2, s_hat)


# expfam_penalty_step is the name used in the module contract
expfam_penalty_step = expfam_step


# ---------------------------------------------------------------------------
# full runs


@dataclass
class ChainResult:
    samples: np.ndarray  # (m, d) retained thetas
    sample_iters: np.ndarray  # 1-based iteration index of each retained sample
    transcript: Transcript
    summary: dict


def _default_start(model):
    return 0.5 * (model.param_box.lower + model.param_box.upper)


def kernel_supported(model, data) -> bool:
    return model.name in _KERNEL_KINDS and model.dim == 1 and data.records.ndim == 1


def run_chain(model: TargetModel, data: Dataset, kernel: ProposalKernel, config: PenaltyConfig,
              mode: str = "penalty", seed: int = 0, theta0=None, accelerated: bool = True) -> ChainResult:
    """Run ``config.iterations`` steps and keep post-burn-in, thinned samples.

    Built-in scalar models go through the compiled loop unless
    ``accelerated=False``; everything else steps in Python. Both paths draw
    the same numbers from the same streams.
    """
    config.check_mode(mode)
    model.check_data(data)
    theta0 = _default_start(model) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=float))
    if not model.param_box.contains(theta0):
        raise ValueError("theta0 must lie in the parameter box")
    streams = ChainStreams.from_seed(seed)
    k = config.iterations
    t0 = time.perf_counter()
    if accelerated and kernel_supported(model, data):
        thetas, transcript = _run_compiled(model, data, kernel, config, mode, streams, float(theta0[0]))
    else:
        thetas, transcript = _run_python(model, data, kernel, config, mode, streams, theta0)
    runtime = time.perf_counter() - t0

    keep = np.arange(config.burn_in, k, config.thin)
    samples = thetas[keep]
    summary = {
        "mode": mode,
        "iterations": k,
        "retained": int(keep.size),
        "acceptance_rate": float(transcript.accepted.mean()),
        "mechanism_calls": transcript.mechanism_calls(),
        "ess": [ess(samples[:, j]) for j in range(samples.shape[1])] if keep.size >= 100 else None,
        "runtime_s": runtime,
    }
    return ChainResult(samples, keep + 1, transcript, summary)


def _run_python(model, data, kernel, config, mode, streams, theta0):
    state = ChainState(theta0, 0)
    suff = suff_stat_sum(model, data) if mode == "expfam" else None
    out = np.empty((config.iterations, theta0.size))
    entries = []
    for t in range(config.iterations):
        if mode == "mh":
            state, e = mh_step(model, data, kernel, state, streams)
        elif mode == "penalty":
            state, e = penalty_step(model, data, kernel, state, config, streams)
        else:
            state, e = expfam_step(model, data, kernel, state, config.xi, streams, suff)
        out[t] = state.theta
        entries.append(e)
    return out, Transcript.from_entries(entries)


def _run_compiled(model, data, kernel, config, mode, streams, theta0):
    k = config.iterations
    w = kernel.half_width
    disp = streams.proposal.uniform(-w, w, size=k)
    u = streams.accept.random(k)
    z = streams.noise.standard_normal(k) if mode != "mh" else np.zeros(0)
    kind = _KERNEL_KINDS[model.name]
    if kind == _kernels.KIND_BERNOULLI:
        p0, p1 = model.hyper["a"], model.hyper["b"]
    else:
        p0, p1 = model.hyper["prior_mean"], model.hyper["prior_sd"]
    s_n = float(np.sum(data.records))
    theta, prev, prop, noisy_d, noisy_stat, sig2, acc, _ = _kernels.chain_kernel(
        kind, float(p0), float(p1),
        float(model.param_box.lower[0]), float(model.param_box.upper[0]),
        float(data.n), s_n, theta0, disp, u, z,
        _KERNEL_MODES[mode], float(config.sigma), float(config.xi or 0.0),
    )
    transcript = Transcript(
        np.arange(1, k + 1), prev[:, None], prop[:, None], noisy_d, sig2, acc,
        noisy_stat[:, None] if mode == "expfam" else None,
    )
    return theta[:, None], transcript
