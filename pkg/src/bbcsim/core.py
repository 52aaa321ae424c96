"""Domain types shared by the protocols, coins and the simulator.

Binary values are plain ints ``0`` and ``1``.  Two extra enumerants live
in the same integer space so envelopes stay cheap to hash:

* ``BOT`` (2): the "both values" vote used by main-vote style messages.
* ``COIN`` (3): the "I support whatever the previous coin says" marker
  used when coin shares are piggybacked on the next round's first message.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Any, Optional

BOT = 2
COIN = 3

VALUE_NAMES = {0: "0", 1: "1", BOT: "bot", COIN: "coin"}


class ConfigError(ValueError):
    """Raised for impossible or contradictory configurations."""


def negate(b: int) -> int:
    if b not in (0, 1):
        raise ValueError(f"cannot negate non-binary value {b!r}")
    return 1 - b


@dataclass(frozen=True)
class SystemParams:
    n: int
    t: int
    quorum_small: int
    quorum_large: int


def thresholds(n: int) -> SystemParams:
    """Fault threshold and quorum sizes for ``n`` processes."""
    if n < 4:
        raise ConfigError(f"n={n}: at least 4 processes are needed to tolerate a fault")
    t = (n - 1) // 3
    return SystemParams(n=n, t=t, quorum_small=t + 1, quorum_large=n - t)


class Kind(enum.IntEnum):
    AUXM = 0
    PRE_VOTE = 1
    MAIN_VOTE = 2
    S_VAL = 3
    S_VAL_S1 = 4
    AUX_STAGE1 = 5
    S_VAL_S2 = 6
    AUX_STAGE2 = 7
    AUX_BOTH = 8
    COIN_SHARE = 9
    COIN_ECHO = 10
    PROOF_OF_DECISION = 11


# kinds whose value may be BOT
BOT_KINDS = frozenset({Kind.MAIN_VOTE, Kind.AUX_BOTH, Kind.S_VAL_S2, Kind.AUX_STAGE2})
COIN_KINDS = frozenset({Kind.COIN_SHARE, Kind.COIN_ECHO})

_COMMON = frozenset(COIN_KINDS)
ACCEPTED_KINDS = {
    "S1": _COMMON | {Kind.AUXM, Kind.PROOF_OF_DECISION},
    "S2": _COMMON | {Kind.PRE_VOTE, Kind.MAIN_VOTE, Kind.PROOF_OF_DECISION},
    "NS1": _COMMON | {Kind.S_VAL, Kind.AUXM},
    "NS2": _COMMON | {Kind.S_VAL_S1, Kind.AUX_STAGE1, Kind.AUX_BOTH, Kind.S_VAL_S2, Kind.AUX_STAGE2},
}
ACCEPTED_KINDS["S3"] = ACCEPTED_KINDS["S1"] | ACCEPTED_KINDS["S2"]
ACCEPTED_KINDS["NS3"] = ACCEPTED_KINDS["NS1"] | ACCEPTED_KINDS["NS2"]


class ProofForm(enum.IntEnum):
    THRESHOLD_SIG = 0
    SIG_SET = 1
    DUAL = 2


@dataclass(frozen=True)
class ValidityProof:
    """Signatures from an earlier round certifying that a value is valid.

    ``kind``/``proven_round``/``proven_value`` name the signed content.  For
    ``DUAL`` the two component proofs (for 0 and for 1) sit in ``parts``.
    """

    form: ProofForm
    sigs: tuple = ()
    proven_round: int = 0
    proven_value: int = 0
    kind: Optional[Kind] = None
    parts: tuple = ()

    def tokens(self):
        if self.form is ProofForm.DUAL:
            for p in self.parts:
                yield from p.tokens()
        else:
            yield from self.sigs


@dataclass(frozen=True)
class Envelope:
    sender: int
    instance: int
    round: int
    kind: Kind
    value: Optional[int] = None
    proof: Optional[ValidityProof] = None
    sig: Any = None
    payload_hint: Any = None
    # coin share for round ``round - 1`` piggybacked on a consensus message
    coin_share: Any = None


def dedup_key(e: Envelope) -> tuple:
    return (e.sender, e.instance, e.round, int(e.kind), e.value)


def content_bytes(instance: int, rnd: int, kind: Kind, value: Optional[int]) -> bytes:
    """Signed content of a message: everything except the sender."""
    v = "-" if value is None else str(value)
    return f"{instance}|{rnd}|{int(kind)}|{v}".encode()


def _token_repr(tok) -> Any:
    if tok is None:
        return None
    return tok.as_dict()


def _proof_repr(p: Optional[ValidityProof]) -> Any:
    if p is None:
        return None
    return {
        "form": p.form.name,
        "sigs": [_token_repr(s) for s in p.sigs],
        "proven_round": p.proven_round,
        "proven_value": p.proven_value,
        "kind": None if p.kind is None else p.kind.name,
        "parts": [_proof_repr(q) for q in p.parts],
    }


def envelope_dict(e: Envelope) -> dict:
    """Field-ordered plain-dict view of an envelope (stable across runs)."""
    return {
        "sender": e.sender,
        "instance": e.instance,
        "round": e.round,
        "kind": e.kind.name,
        "value": e.value,
        "proof": _proof_repr(e.proof),
        "sig": _token_repr(e.sig),
        "payload_hint": _token_repr(e.payload_hint),
        "coin_share": _token_repr(e.coin_share),
    }


def serialize(e: Envelope) -> bytes:
    return json.dumps(envelope_dict(e), separators=(",", ":")).encode()
