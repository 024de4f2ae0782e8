from .protocol import (
    ContributionTimeout,
    Coordinator,
    Party,
    ProtocolConfig,
    ProtocolError,
    Shard,
    party_contribution,
    run_protocol,
    sharing_step,
    split_dataset,
    validate_shards,
)
from .transport import InProcessTransport, SocketTransport, make_transport
from .wire import Kind, MessageDecodeError, PartyMessage, decode_message, encode_message

__all__ = [
    "ContributionTimeout", "Coordinator", "InProcessTransport", "Kind", "MessageDecodeError",
    "Party", "PartyMessage", "ProtocolConfig", "ProtocolError", "Shard", "SocketTransport",
    "decode_message", "encode_message", "make_transport", "party_contribution", "run_protocol",
    "sharing_step", "split_dataset", "validate_shards",
]
