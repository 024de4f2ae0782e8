"""N-party penalty chain.

A data-free coordinator proposes, each party answers with its own noisy
log-likelihood difference, and the coordinator accepts with
``min(1, prior ratio * exp(sum_i d_hat_i - N sigma^2 / 2))``. Parties only
ever see proposals and decisions; the coordinator only ever sees noisy
contributions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..diagnostics import ess
from ..models import Dataset, TargetModel, ValidationError
from ..rng import stream
from ..samplers import ChainResult, ChainState, ProposalKernel, Transcript, TranscriptEntry, propose
from .wire import Kind, PartyMessage


class ProtocolError(RuntimeError):
    """A round could not be completed (missing or malformed contributions)."""


class ContributionTimeout(ProtocolError):
    pass


@dataclass(frozen=True)
class Shard:
    party_id: int
    data: Dataset
    indices: np.ndarray  # positions of the shard's records in the full dataset


def split_dataset(data: Dataset, sizes) -> list:
    """Cut ``data`` into consecutive shards of the given sizes, party ids 1..N."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes) or sum(sizes) != data.n:
        raise ValidationError(f"shard sizes {sizes} do not partition {data.n} records")
    bounds = np.cumsum([0] + sizes)
    return [
        Shard(i + 1, Dataset(data.records[a:b]), np.arange(a, b))
        for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]


def validate_shards(shards) -> int:
    """Check party ids are 1..N and indices partition ``range(n)``; return ``n``."""
    ids = sorted(s.party_id for s in shards)
    if ids != list(range(1, len(shards) + 1)):
        raise ValidationError(f"party ids must be 1..N, got {ids}")
    idx = np.concatenate([np.asarray(s.indices) for s in shards])
    n = idx.size
    for s in shards:
        if len(s.indices) != s.data.n:
            raise ValidationError(f"party {s.party_id}: {len(s.indices)} indices for {s.data.n} records")
    if np.unique(idx).size != n:
        raise ValidationError("shards overlap")
    if n and (idx.min() != 0 or idx.max() != n - 1):
        raise ValidationError("shards leave a gap in the record indices")
    return n


def party_contribution(shard: Shard, model: TargetModel, theta, theta_prime, sigma, rng) -> float:
    """The shard's summed log-likelihood difference plus N(0, sigma^2) noise."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_prime = np.atleast_1d(np.asarray(theta_prime, dtype=float))
    if not (model.param_box.contains(theta) and model.param_box.contains(theta_prime)):
        raise ValidationError("contribution requested outside the parameter box")
    y = shard.data.records
    d = float(np.sum(model.log_lik_record(y, theta_prime) - model.log_lik_record(y, theta)))
    return d + sigma * rng.standard_normal()


class Party:
    """A data holder. Its only data-dependent output is :func:`party_contribution`."""

    def __init__(self, shard: Shard, model: TargetModel, sigma: float, seed: int):
        model.check_data(shard.data)
        self.party_id = shard.party_id
        self._shard = shard
        self._model = model
        self._sigma = float(sigma)
        self._rng = stream(seed, "noise", shard.party_id)
        self.releases = 0

    def handle(self, msg: PartyMessage) -> Optional[PartyMessage]:
        if msg.kind is Kind.PROPOSAL:
            d_hat = party_contribution(self._shard, self._model, msg.theta, msg.theta_prime, self._sigma, self._rng)
            self.releases += 1
            return PartyMessage(msg.round, Kind.CONTRIBUTION, party_id=self.party_id, noisy_d=d_hat)
        return None


@dataclass(frozen=True)
class ProtocolConfig:
    num_parties: int
    sigma: float
    rounds: int
    transport: str = "in_process"
    timeout: float = 5.0
    max_retries: int = 3
    burn_in: Optional[int] = None
    thin: int = 1

    def __post_init__(self):
        if self.num_parties < 1:
            raise ValueError("num_parties must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.transport not in ("in_process", "socket"):
            raise ValueError("transport must be 'in_process' or 'socket'")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.rounds // 10)
        if not 0 <= self.burn_in < self.rounds:
            raise ValueError("burn_in must satisfy 0 <= burn_in < rounds")

    @property
    def total_variance(self) -> float:
        return self.num_parties * self.sigma**2


class Coordinator:
    """Drives the chain; holds the proposal and accept streams and no data."""

    def __init__(self, model: TargetModel, kernel: ProposalKernel, config: ProtocolConfig, transport, seed: int):
        self.model = model
        self.kernel = kernel
        self.config = config
        self.transport = transport
        self.proposal_rng = stream(seed, "proposal")
        self.accept_rng = stream(seed, "accept")
        self.next_round = 1
        self.proposals_sent = 0

    def _collect(self, theta, theta_prime):
        """Broadcast one proposal and gather all N contributions, retrying with fresh rounds."""
        n = self.config.num_parties
        last = None
        for _ in range(self.config.max_retries + 1):
            rnd = self.next_round
            self.next_round += 1
            self.proposals_sent += 1
            msg = PartyMessage(rnd, Kind.PROPOSAL, theta=theta, theta_prime=theta_prime)
            try:
                replies = self.transport.request(msg, n, self.config.timeout)
            except ContributionTimeout as exc:
                last = exc
                continue
            got = {}
            for r in replies:
                if r.kind is not Kind.CONTRIBUTION or r.round != rnd:
                    raise ProtocolError(f"unexpected reply {r.kind.value} for round {r.round}")
                if r.party_id in got:
                    raise ProtocolError(f"party {r.party_id} answered round {rnd} twice")
                got[r.party_id] = r.noisy_d
            if sorted(got) != list(range(1, n + 1)):
                raise ProtocolError(f"round {rnd}: contributions from parties {sorted(got)}")
            return rnd, tuple(got[i] for i in range(1, n + 1))
        raise ProtocolError(f"no complete set of contributions after {self.config.max_retries + 1} attempts: {last}")


def sharing_step(coord: Coordinator, state: ChainState):
    """One protocol iteration; on :class:`ProtocolError` the chain state is unchanged."""
    model, cfg = coord.model, coord.config
    theta = np.atleast_1d(np.asarray(state.theta, dtype=float))
    prop = propose(coord.kernel, theta, coord.proposal_rng)
    u = coord.accept_rng.random()
    log_u = math.log(u) if u > 0 else -math.inf
    t = state.iter + 1
    lp = model.log_prior_ratio(theta, prop)
    if lp == -math.inf:
        return ChainState(theta, t), TranscriptEntry(t, theta, prop, None, None, False)
    rnd, contribs = coord._collect(theta, prop)
    total = 0.0
    for d in contribs:
        total += d
    s2 = cfg.total_variance
    accepted = log_u < lp + total - 0.5 * s2
    coord.transport.notify(PartyMessage(rnd, Kind.DECISION, accepted=bool(accepted)))
    return ChainState(prop if accepted else theta, t), TranscriptEntry(t, theta, prop, contribs, s2, accepted)


def run_protocol(model: TargetModel, shards, kernel: ProposalKernel, config: ProtocolConfig, seed: int = 0,
                 theta0=None, plan=None, transport=None) -> ChainResult:
    """Run ``config.rounds`` iterations of the shared chain.

    ``plan`` (a :class:`~penaltydp.privacy.PrivacyPlan`) is copied into the
    per-party privacy report: every party's release has the single-owner
    sensitivity, so the single-owner plan applies to each party unchanged.
    """
    from .transport import make_transport

    validate_shards(shards)
    if len(shards) != config.num_parties:
        raise ValidationError(f"{len(shards)} shards for {config.num_parties} parties")
    theta0 = (0.5 * (model.param_box.lower + model.param_box.upper) if theta0 is None
              else np.atleast_1d(np.asarray(theta0, dtype=float)))
    own_transport = transport is None
    if own_transport:
        transport = make_transport(config.transport, shards, model, config.sigma, seed)
    coord = Coordinator(model, kernel, config, transport, seed)
    out = np.empty((config.rounds, theta0.size))
    entries = []
    state = ChainState(theta0, 0)
    t0 = time.perf_counter()
    try:
        for t in range(config.rounds):
            state, e = sharing_step(coord, state)
            out[t] = state.theta
            entries.append(e)
    finally:
        if own_transport:
            transport.close()
    runtime = time.perf_counter() - t0

    transcript = Transcript.from_entries(entries)
    keep = np.arange(config.burn_in, config.rounds, config.thin)
    samples = out[keep]
    per_party = {}
    for s in sorted(shards, key=lambda s: s.party_id):
        rep = {"records": int(s.data.n), "invocations": coord.proposals_sent, "sigma": config.sigma}
        if plan is not None:
            rep.update(plan.report())
        per_party[s.party_id] = rep
    summary = {
        "mode": "sharing",
        "num_parties": config.num_parties,
        "rounds": config.rounds,
        "retained": int(keep.size),
        "acceptance_rate": float(transcript.accepted.mean()),
        "total_penalty_variance": config.total_variance,
        "proposals_sent": coord.proposals_sent,
        "ess": [ess(samples[:, j]) for j in range(samples.shape[1])] if keep.size >= 100 else None,
        "runtime_s": runtime,
        "privacy": per_party,
    }
    return ChainResult(samples, keep + 1, transcript, summary)
