"""Named, independent random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus
a spawn key ``(stream_id, party_id)``. Streams never share state, so the
proposal, accept and noise draws of a chain stay aligned across modes and
transports no matter how many draws another stream consumes.
"""

from dataclasses import dataclass

import numpy as np

PROPOSAL = 0
ACCEPT = 1
NOISE = 2

_NAMES = {"proposal": PROPOSAL, "accept": ACCEPT, "noise": NOISE}


def stream(seed, name, party_id=1):
    """Return the generator for stream ``name`` of run ``seed``.

    Noise streams are per party; the single-owner chain uses party 1, which
    makes a one-party sharing run draw exactly the same noise.
    """
    try:
        sid = _NAMES[name]
    except KeyError:
        raise ValueError(f"unknown stream {name!r}") from None
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(sid, int(party_id)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ChainStreams:
    proposal: np.random.Generator
    accept: np.random.Generator
    noise: np.random.Generator

    @classmethod
    def from_seed(cls, seed):
        return cls(stream(seed, "proposal"), stream(seed, "accept"), stream(seed, "noise"))
