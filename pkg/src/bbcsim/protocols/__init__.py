"""The six consensus algorithms behind one driver contract.

    proto = make_protocol(cfg, pid, instance, keyring)
    actions = proto.start(proposal)
    actions = proto.handle(event)      # Envelope or CoinRevealed
"""
from .base import (ALGORITHMS, DEFAULT_COIN_THRESHOLD, SIGNED, Broadcast, CoinRevealed, Decide,
                   Protocol, ProtocolConfig, RequestCoinShare, Terminate, describe)
from .signed import S1, S2, S3, SignedProtocol
from .unsigned import NS1, NS2, NS3, UnsignedProtocol

_CLASSES = {"S1": S1, "S2": S2, "S3": S3, "NS1": NS1, "NS2": NS2, "NS3": NS3}


def make_protocol(cfg: ProtocolConfig, pid: int, instance: int = 0, keyring=None) -> Protocol:
    return _CLASSES[cfg.algorithm](cfg, pid, instance, keyring)


def init(cfg: ProtocolConfig, proposal: int, pid: int = 0, instance: int = 0, keyring=None):
    """Create a state machine and start it; returns ``(state, actions)``."""
    p = make_protocol(cfg, pid, instance, keyring)
    return p, p.start(proposal)


def handle(state: Protocol, event):
    return state, state.handle(event)


# per-algorithm names; the state object already knows its rules
handle_s1 = handle_s2 = handle_s3 = handle_ns1 = handle_ns2 = handle_ns3 = handle

__all__ = ["ALGORITHMS", "DEFAULT_COIN_THRESHOLD", "SIGNED", "Broadcast", "CoinRevealed", "Decide",
           "Protocol", "ProtocolConfig", "RequestCoinShare", "Terminate", "describe",
           "S1", "S2", "S3", "NS1", "NS2", "NS3", "SignedProtocol", "UnsignedProtocol",
           "make_protocol", "init", "handle", "handle_s1", "handle_s2", "handle_s3",
           "handle_ns1", "handle_ns2", "handle_ns3"]
