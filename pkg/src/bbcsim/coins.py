"""Threshold common coins (CI:tc, CI:tce, CI:pc, CI:pce) over the behavioral keyring.

The revealed bit comes from a fixed keyed PRF so that every configuration
sharing a coin seed sees the same coin in the same (instance, round):

    bit = top bit of BLAKE2b(key=seed as 8 little-endian bytes,
                             data=instance as 8 LE bytes || round as 8 LE bytes,
                             digest_size=1)

The PRF is part of the reproducibility contract; do not change it.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .core import ConfigError, Envelope, Kind, SystemParams, content_bytes
from .primitives import THRESH_LARGE, THRESH_SMALL, Keyring


class CoinScheme(str, enum.Enum):
    TC = "TC"
    TCE = "TCE"
    PC = "PC"
    PCE = "PCE"

    @property
    def echo(self) -> bool:
        return self in (CoinScheme.TCE, CoinScheme.PCE)

    @property
    def family(self) -> str:
        return "PC" if self in (CoinScheme.PC, CoinScheme.PCE) else "TC"


class NotReady(RuntimeError):
    """Share requested before the echo gate opened."""


@dataclass(frozen=True)
class CoinConfig:
    scheme: CoinScheme = CoinScheme.TC
    threshold: str = "large"  # "small" = t+1, "large" = n-t
    presets: bool = False
    seed: int = 0
    d: int = 2

    def __post_init__(self):
        object.__setattr__(self, "scheme", CoinScheme(self.scheme))
        if self.d != 2:
            raise ConfigError("only strong coins (d = 2) are supported")
        if self.threshold not in ("small", "large"):
            raise ConfigError(f"coin threshold must be 'small' or 'large', not {self.threshold!r}")
        if self.scheme.echo and self.threshold != "small":
            # echo schemes exist to run a t+1 coin where n-t participation is needed
            object.__setattr__(self, "threshold", "small")

    def required(self, params: SystemParams) -> int:
        return params.quorum_small if self.threshold == "small" else params.quorum_large

    @property
    def key_scheme(self) -> str:
        return THRESH_SMALL if self.threshold == "small" else THRESH_LARGE


def prf_bit(seed: int, instance: int, rnd: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    data = instance.to_bytes(8, "little") + rnd.to_bytes(8, "little")
    return hashlib.blake2b(data, key=key, digest_size=1).digest()[0] >> 7


def coin_value(seed: int, instance: int, rnd: int, presets: bool = False) -> int:
    if rnd < 1:
        raise ValueError("coins exist for rounds >= 1")
    if presets and rnd <= 2:
        return 1 if rnd == 1 else 0
    return prf_bit(seed, instance, rnd)


def coin_content(instance: int, rnd: int) -> bytes:
    return content_bytes(instance, rnd, Kind.COIN_SHARE, None)


@dataclass
class CoinState:
    round: int
    echoes: set = field(default_factory=set)
    shares: dict = field(default_factory=dict)
    revealed: Optional[int] = None


def absorb_share(cs: CoinState, share: Envelope, threshold: int, keyring: Keyring,
                 seed: int, presets: bool = False) -> tuple[CoinState, Optional[int]]:
    """Count one share; return the coin value the first time the threshold is met.

    Invalid shares (wrong round binding, bad token, signer mismatch) are ignored.
    """
    tok = share.payload_hint
    if share.kind is not Kind.COIN_SHARE or share.round != cs.round:
        return cs, None
    if not keyring.verify(share.sender, coin_content(share.instance, share.round), tok):
        return cs, None
    cs.shares.setdefault(share.sender, tok)
    if cs.revealed is None and len(cs.shares) >= threshold:
        cs.revealed = coin_value(seed, share.instance, cs.round, presets)
        return cs, cs.revealed
    return cs, None


class CoinEngine:
    """One process's view of the coin for one consensus instance."""

    def __init__(self, pid: int, instance: int, params: SystemParams, cfg: CoinConfig,
                 keyring: Keyring):
        self.pid = pid
        self.instance = instance
        self.params = params
        self.cfg = cfg
        self.keyring = keyring
        self.required = cfg.required(params)
        self.states: dict[int, CoinState] = {}
        self.requested: set[int] = set()
        self.shared: set[int] = set()
        # (round, distinct echo senders seen, shares held) per reveal
        self.reveal_log: list[tuple[int, int, int]] = []

    def state(self, rnd: int) -> CoinState:
        cs = self.states.get(rnd)
        if cs is None:
            cs = self.states[rnd] = CoinState(rnd)
        return cs

    def ready(self, rnd: int) -> bool:
        return not self.cfg.scheme.echo or len(self.state(rnd).echoes) >= self.params.quorum_large

    def share_token(self, rnd: int):
        return self.keyring.sign(self.pid, coin_content(self.instance, rnd), self.cfg.key_scheme)

    def make_share(self, rnd: int) -> Envelope:
        if not self.ready(rnd):
            raise NotReady(f"round {rnd}: echo quorum not reached")
        self.shared.add(rnd)
        return Envelope(self.pid, self.instance, rnd, Kind.COIN_SHARE,
                        payload_hint=self.share_token(rnd))

    def request(self, rnd: int) -> list[Envelope]:
        """Reach the coin point of ``rnd``; returns envelopes to broadcast."""
        if rnd in self.requested:
            return []
        self.requested.add(rnd)
        if self.cfg.scheme.echo:
            out = [Envelope(self.pid, self.instance, rnd, Kind.COIN_ECHO)]
            if self.ready(rnd):
                out.append(self.make_share(rnd))
            return out
        return [self.make_share(rnd)]

    def on_echo(self, env: Envelope) -> list[Envelope]:
        cs = self.state(env.round)
        cs.echoes.add(env.sender)
        if env.round in self.requested and env.round not in self.shared and self.ready(env.round):
            return [self.make_share(env.round)]
        return []

    def on_share(self, env: Envelope) -> Optional[int]:
        cs, val = absorb_share(self.state(env.round), env, self.required, self.keyring,
                               self.cfg.seed, self.cfg.presets)
        if val is not None:
            self.reveal_log.append((env.round, len(cs.echoes), len(cs.shares)))
        return val

    def trace(self) -> dict[int, int]:
        return {r: cs.revealed for r, cs in sorted(self.states.items()) if cs.revealed is not None}
