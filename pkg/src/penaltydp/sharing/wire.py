"""Wire format for the sharing protocol: one JSON object per line.

Fields are ``round, kind, theta, theta_prime, party_id, noisy_d, accepted``;
absent fields are omitted. Floats are written with 17 significant digits so
every double survives the round trip exactly.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional

from ..outputs import dumps17


class Kind(str, enum.Enum):
    PROPOSAL = "PROPOSAL"
    CONTRIBUTION = "CONTRIBUTION"
    DECISION = "DECISION"
    SHUTDOWN = "SHUTDOWN"


class MessageDecodeError(ValueError):
    def __init__(self, msg, offset):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class PartyMessage:
    round: int
    kind: Kind
    theta: Optional[tuple] = None
    theta_prime: Optional[tuple] = None
    party_id: Optional[int] = None
    noisy_d: Optional[float] = None
    accepted: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        for name in ("theta", "theta_prime"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))
        if self.round < 0:
            raise ValueError("round must be non-negative")
        if self.kind is Kind.PROPOSAL and (self.theta is None or self.theta_prime is None):
            raise ValueError("PROPOSAL needs theta and theta_prime")
        if self.kind is Kind.CONTRIBUTION and (self.party_id is None or self.noisy_d is None):
            raise ValueError("CONTRIBUTION needs party_id and noisy_d")
        if self.kind is Kind.DECISION and self.accepted is None:
            raise ValueError("DECISION needs accepted")


_FIELDS = ("round", "kind", "theta", "theta_prime", "party_id", "noisy_d", "accepted")


def encode_message(msg: PartyMessage) -> bytes:
    body = {}
    for f in _FIELDS:
        v = getattr(msg, f)
        if v is None:
            continue
        if f == "kind":
            v = v.value
        elif f == "noisy_d":
            v = float(v)
        elif f in ("round", "party_id"):
            v = int(v)
        elif f == "accepted":
            v = bool(v)
        body[f] = v
    return (dumps17(body) + "\n").encode("utf-8")


def decode_message(frame: bytes) -> PartyMessage:
    """Parse one newline-terminated frame. Any defect raises :class:`MessageDecodeError`."""
    if not frame.endswith(b"\n"):
        raise MessageDecodeError("truncated frame: missing newline terminator", len(frame))
    body = frame[:-1]
    if b"\n" in body:
        raise MessageDecodeError("embedded newline", body.index(b"\n"))
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MessageDecodeError("invalid utf-8", exc.start) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MessageDecodeError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from None
    if not isinstance(obj, dict):
        raise MessageDecodeError("frame is not a JSON object", 0)
    unknown = set(obj) - set(_FIELDS)
    if unknown:
        raise MessageDecodeError(f"unknown fields {sorted(unknown)}", 0)
    try:
        kind = Kind(obj["kind"])
        rnd = obj["round"]
        if not isinstance(rnd, int) or isinstance(rnd, bool):
            raise TypeError("round must be an integer")
        pid = obj.get("party_id")
        if pid is not None and (not isinstance(pid, int) or isinstance(pid, bool)):
            raise TypeError("party_id must be an integer")
        acc = obj.get("accepted")
        if acc is not None and not isinstance(acc, bool):
            raise TypeError("accepted must be a boolean")
        nd = obj.get("noisy_d")
        if nd is not None:
            if isinstance(nd, bool) or not isinstance(nd, (int, float)):
                raise TypeError("noisy_d must be a number")
            nd = float(nd)
        return PartyMessage(rnd, kind, obj.get("theta"), obj.get("theta_prime"), pid, nd, acc)
    except (KeyError, TypeError, ValueError) as exc:
        raise MessageDecodeError(f"invalid message: {exc}", 0) from None
