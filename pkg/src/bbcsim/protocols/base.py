from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from ..coins import CoinConfig, CoinScheme, coin_value
from ..core import (ACCEPTED_KINDS, BOT, COIN, VALUE_NAMES, ConfigError, Envelope, Kind,
                    SystemParams, dedup_key, thresholds)

ALGORITHMS = ("S1", "S2", "S3", "NS1", "NS2", "NS3")
SIGNED = frozenset({"S1", "S2", "S3"})

# Table 1 defaults: coin threshold per algorithm
DEFAULT_COIN_THRESHOLD = {"S1": "large", "S2": "large", "S3": "large",
                          "NS1": "large", "NS2": "small", "NS3": "small"}


@dataclass(frozen=True)
class ProtocolConfig:
    algorithm: str
    params: SystemParams
    coin: CoinConfig = field(default_factory=CoinConfig)
    include_proofs: bool = True
    combine_coin: bool = False
    prefer_one: bool = True
    signature: Optional[str] = None

    def __post_init__(self):
        alg = self.algorithm.upper()
        object.__setattr__(self, "algorithm", alg)
        if alg not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if alg in SIGNED:
            if self.signature is None:
                sig = "EDDSA" if self.coin.scheme.family == "PC" else "TBLS"
                object.__setattr__(self, "signature", sig)
            if self.signature not in ("TBLS", "EDDSA"):
                raise ConfigError(f"unknown signature type {self.signature!r}")
        else:
            if self.signature is not None:
                raise ConfigError(f"{alg} sends unsigned messages")
            if self.combine_coin:
                raise ConfigError("combining coin and consensus messages needs signatures")
        if self.combine_coin and self.coin.scheme.echo:
            raise ConfigError("combine_coin is not supported with echo coin schemes")
        if not self.prefer_one:
            raise ConfigError("prefer_one is fixed to True")

    @classmethod
    def default(cls, algorithm: str, n: int, *, coin_scheme: str = "TC",
                coin_threshold: Optional[str] = None, presets: bool = False, coin_seed: int = 0,
                **kw) -> "ProtocolConfig":
        alg = algorithm.upper()
        coin = CoinConfig(scheme=CoinScheme(coin_scheme),
                          threshold=coin_threshold or DEFAULT_COIN_THRESHOLD[alg],
                          presets=presets, seed=coin_seed)
        return cls(alg, thresholds(n), coin, **kw)

    @property
    def signed(self) -> bool:
        return self.algorithm in SIGNED


# -- events and actions ---------------------------------------------------------

@dataclass(frozen=True)
class CoinRevealed:
    round: int
    value: int


@dataclass(frozen=True)
class Broadcast:
    envelope: Envelope
    # round whose coin share rides along with this message (combine-coin mode)
    coin_round: Optional[int] = None


@dataclass(frozen=True)
class RequestCoinShare:
    round: int


@dataclass(frozen=True)
class Decide:
    value: int
    round: int


@dataclass(frozen=True)
class Terminate:
    pass


Action = Union[Broadcast, RequestCoinShare, Decide, Terminate]
Event = Union[Envelope, CoinRevealed]


def describe(obj) -> str:
    """Short stable text for traces."""
    if isinstance(obj, Envelope):
        v = "" if obj.value is None else VALUE_NAMES[obj.value]
        extra = "+share" if obj.coin_share is not None else ""
        return f"{obj.kind.name}(p{obj.sender},r{obj.round},{v}){extra}"
    if isinstance(obj, Broadcast):
        return "bcast " + describe(obj.envelope) + (
            f"+share{obj.coin_round}" if obj.coin_round is not None else "")
    if isinstance(obj, CoinRevealed):
        return f"coin(r{obj.round})={obj.value}"
    if isinstance(obj, RequestCoinShare):
        return f"coin-request r{obj.round}"
    if isinstance(obj, Decide):
        return f"decide {obj.value} r{obj.round}"
    if isinstance(obj, Terminate):
        return "terminate"
    if isinstance(obj, int):
        return f"propose {obj}"
    return repr(obj)


class Protocol:
    """Event-driven state machine for one process in one consensus instance.

    ``start(proposal)`` and ``handle(event)`` return the actions produced by
    that transition.  Subclasses put their rules in ``_on_envelope`` and
    ``_progress``; the latter is re-run after every event until quiescent.
    """

    def __init__(self, cfg: ProtocolConfig, pid: int, instance: int = 0, keyring=None):
        self.cfg = cfg
        self.pid = pid
        self.instance = instance
        self.keyring = keyring
        p = cfg.params
        self.n, self.t, self.small, self.large = p.n, p.t, p.quorum_small, p.quorum_large
        self.accepted = ACCEPTED_KINDS[cfg.algorithm]
        self.round = 0
        self.est: Optional[int] = None
        self.proposal: Optional[int] = None
        self.decided: Optional[tuple[int, int]] = None
        self.terminated = False
        # set when a decision fired for a round the process had already left
        self.late_decision = False
        # rounds whose next estimate was taken from the coin
        self.coin_estimates: set[int] = set()
        self.coins: dict[int, int] = {}
        self.coin_requested: set[int] = set()
        self.broadcasts: list[Envelope] = []
        self.on_transition: Optional[Callable[[dict], None]] = None
        self._seen: set = set()
        self._out: list = []

    # -- driver contract --

    def start(self, proposal: int) -> list:
        if proposal not in (0, 1):
            raise ValueError(f"proposal must be 0 or 1, got {proposal!r}")
        self.proposal = self.est = proposal
        self._start()
        self._progress()
        return self._flush(proposal)

    def handle(self, event: Event) -> list:
        if isinstance(event, CoinRevealed):
            self.coins.setdefault(event.round, event.value)
        elif isinstance(event, Envelope):
            if event.kind not in self.accepted or event.instance != self.instance:
                return []
            key = dedup_key(event)
            if key in self._seen:
                return []
            if not self._on_envelope(event):
                return []
            self._seen.add(key)
        else:
            raise TypeError(f"unsupported event {event!r}")
        self._progress()
        return self._flush(event)

    # -- helpers for subclasses --

    def _flush(self, event) -> list:
        out, self._out = self._out, []
        if self.on_transition is not None:
            self.on_transition({
                "process": self.pid,
                "instance": self.instance,
                "round": self.round,
                "event": describe(event),
                "actions": [describe(a) for a in out],
            })
        return out

    def _broadcast(self, kind: Kind, rnd: int, value: Optional[int], proof=None,
                   coin_round: Optional[int] = None) -> Envelope:
        env = Envelope(self.pid, self.instance, rnd, kind, value, proof)
        self.broadcasts.append(env)
        self._out.append(Broadcast(env, coin_round))
        return env

    def _decide(self, value: int, rnd: int) -> bool:
        if self.decided is not None:
            return False
        self.decided = (value, max(rnd, 1))
        self._out.append(Decide(value, max(rnd, 1)))
        return True

    def _terminate(self):
        if not self.terminated:
            self.terminated = True
            self._out.append(Terminate())

    def forced_coin(self, rnd: int) -> Optional[int]:
        """Coin value known without any messages (presets / combination rounds)."""
        if rnd <= 2 and (self.cfg.coin.presets or self.cfg.algorithm in ("S3", "NS3")):
            return 1 if rnd == 1 else 0
        return None

    def coin_of(self, rnd: int) -> int:
        """The coin as certified inside proofs (the combined coin signature is public)."""
        forced = self.forced_coin(rnd)
        if forced is not None:
            return forced
        return coin_value(self.cfg.coin.seed, self.instance, rnd)

    def _reach_coin_point(self, rnd: int) -> None:
        """Mark the coin point of ``rnd``; ask the driver for a share unless preset."""
        if rnd in self.coin_requested:
            return
        self.coin_requested.add(rnd)
        forced = self.forced_coin(rnd)
        if forced is not None:
            self.coins.setdefault(rnd, forced)
        else:
            self._out.append(RequestCoinShare(rnd))

    @staticmethod
    def _prefer(values) -> Optional[int]:
        """Preference order at free choices: 1, then 0, then BOT."""
        for v in (1, 0, BOT):
            if v in values:
                return v
        return None

    # -- overridden --

    def _start(self) -> None:
        raise NotImplementedError

    def _on_envelope(self, env: Envelope) -> bool:
        raise NotImplementedError

    def _progress(self) -> None:
        raise NotImplementedError

    def proof_for(self, kind: Kind, rnd: int, value: int):
        """Best validity proof this process could attach to (kind, rnd, value)."""
        return None


__all__ = ["ALGORITHMS", "SIGNED", "DEFAULT_COIN_THRESHOLD", "ProtocolConfig", "CoinRevealed",
           "Broadcast", "RequestCoinShare", "Decide", "Terminate", "Protocol", "describe",
           "COIN", "BOT"]
