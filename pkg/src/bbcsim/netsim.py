"""Deterministic discrete-event simulator for one consensus instance.

Channels are reliable point-to-point links.  A message sent at virtual time
``t`` is delivered at ``t + latency + scheduler adjustment``; ties are broken
by a global sequence number, so a run is a pure function of its config and
seeds.  Optionally each node has a CPU that is charged the crypto costs of
the work it does (signing, verifying, coin generation, ...).
"""
from __future__ import annotations

import enum
import heapq
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .coins import CoinEngine, CoinScheme
from .core import BOT, BOT_KINDS, ConfigError, Envelope, Kind, content_bytes, negate
from .primitives import CostModel, CryptoConfig, Keyring, ThresholdSignatureToken, message_size, op_cost
from .protocols import (Broadcast, CoinRevealed, Decide, ProtocolConfig, RequestCoinShare,
                        Terminate, make_protocol)

ROUND_CAP = 50


# -- latency -------------------------------------------------------------------

class LatencyKind(str, enum.Enum):
    CONSTANT = "CONSTANT"
    PAIR_MATRIX = "PAIR_MATRIX"
    UNIFORM = "UNIFORM"
    REGION = "REGION"


def _region_matrix(k: int, intra: float, lo: float, hi: float) -> np.ndarray:
    """One-way delays between ``k`` regions, inter-region pairs spread over [lo, hi]."""
    m = np.full((k, k), intra)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    for (i, j), d in zip(pairs, np.linspace(lo, hi, len(pairs)) if pairs else []):
        m[i, j] = m[j, i] = d
    return m


# one-way delays in ms; RTTs are twice these
REGION_PRESETS = {
    "single": _region_matrix(1, 0.075, 0, 0),
    "us4": _region_matrix(4, 1.0, 10.0, 17.5),
    "global8": _region_matrix(8, 1.0, 12.5, 140.0),
}


@dataclass
class LatencyModel:
    kind: LatencyKind = LatencyKind.CONSTANT
    constant: float = 10.0
    matrix: Optional[list] = None
    lo: float = 1.0
    hi: float = 10.0
    region: str = "single"
    seed: int = 0

    def __post_init__(self):
        self.kind = LatencyKind(self.kind)
        self._rng = random.Random(self.seed)
        if self.kind is LatencyKind.CONSTANT and self.constant <= 0:
            raise ConfigError("latency must be positive")
        if self.kind is LatencyKind.UNIFORM and not 0 < self.lo <= self.hi:
            raise ConfigError("uniform latency needs 0 < lo <= hi")
        if self.kind is LatencyKind.REGION:
            if self.region not in REGION_PRESETS:
                raise ConfigError(f"unknown region preset {self.region!r}")
            self._regions = REGION_PRESETS[self.region]
        if self.kind is LatencyKind.PAIR_MATRIX:
            m = np.asarray(self.matrix, dtype=float)
            if m.ndim != 2 or (m <= 0).any():
                raise ConfigError("pair matrix must be 2-D with positive entries")
            self._m = m

    def reset(self, instance: int = 0):
        # string seeds hash deterministically; each instance gets its own stream
        self._rng = random.Random(f"{self.seed}:{instance}")

    def delay(self, src: int, dst: int) -> float:
        k = self.kind
        if k is LatencyKind.CONSTANT:
            return self.constant
        if k is LatencyKind.UNIFORM:
            return self._rng.uniform(self.lo, self.hi)
        if k is LatencyKind.REGION:
            r = len(self._regions)
            return float(self._regions[src % r, dst % r])
        return float(self._m[src, dst])

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "LatencyModel":
        """``constant:10``, ``uniform:1:5``, ``region:us4``, ``matrix:<file.json>``."""
        name, _, rest = text.partition(":")
        name = name.lower()
        if name == "constant":
            return cls(LatencyKind.CONSTANT, constant=float(rest or 10.0), seed=seed)
        if name == "uniform":
            lo, hi = (float(x) for x in rest.split(":"))
            return cls(LatencyKind.UNIFORM, lo=lo, hi=hi, seed=seed)
        if name == "region":
            return cls(LatencyKind.REGION, region=rest or "single", seed=seed)
        if name == "matrix":
            return cls(LatencyKind.PAIR_MATRIX, matrix=json.loads(Path(rest).read_text()), seed=seed)
        raise ConfigError(f"unknown latency model {text!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "constant": self.constant, "matrix": self.matrix,
                "lo": self.lo, "hi": self.hi, "region": self.region, "seed": self.seed}


# -- scheduling ----------------------------------------------------------------

class Policy(str, enum.Enum):
    FIFO = "FIFO"
    RANDOM = "RANDOM"
    ADVERSARY = "ADVERSARY"


@dataclass(frozen=True)
class DelayRule:
    """Delay matching messages by ``delay`` ms.  ``None`` fields match anything."""
    delay: float
    senders: Optional[frozenset] = None
    kinds: Optional[frozenset] = None
    rounds: Optional[frozenset] = None
    receivers: Optional[frozenset] = None

    def matches(self, e: Envelope, dst: int) -> bool:
        return ((self.senders is None or e.sender in self.senders)
                and (self.kinds is None or e.kind.name in self.kinds)
                and (self.rounds is None or e.round in self.rounds)
                and (self.receivers is None or dst in self.receivers))

    @classmethod
    def from_dict(cls, d: dict) -> "DelayRule":
        fs = {k: (None if d.get(k) is None else frozenset(d[k]))
              for k in ("senders", "kinds", "rounds", "receivers")}
        return cls(float(d["delay"]), **fs)


@dataclass
class Scheduler:
    policy: Policy = Policy.FIFO
    seed: int = 0
    jitter: float = 1.0
    rules: tuple = ()
    bound: float = 1000.0

    def __post_init__(self):
        self.policy = Policy(self.policy)
        self.rules = tuple(r if isinstance(r, DelayRule) else DelayRule.from_dict(r) for r in self.rules)
        if self.jitter < 0 or self.bound < 0:
            raise ConfigError("scheduler delays must be nonnegative")
        self._rng = random.Random(self.seed)

    def reset(self, instance: int = 0):
        self._rng = random.Random(f"{self.seed}:{instance}")

    def adjust(self, e: Envelope, dst: int) -> float:
        if self.policy is Policy.FIFO:
            return 0.0
        if self.policy is Policy.RANDOM:
            return self._rng.uniform(0.0, self.jitter)
        extra = sum(r.delay for r in self.rules if r.matches(e, dst))
        return min(extra, self.bound)

    @classmethod
    def parse(cls, text: str) -> "Scheduler":
        """``fifo``, ``random:<seed>[:<jitter>]`` or ``adversary:<rules.json>``."""
        name, _, rest = text.partition(":")
        name = name.lower()
        if name == "fifo":
            return cls()
        if name == "random":
            parts = rest.split(":") if rest else []
            seed = int(parts[0]) if parts else 0
            jitter = float(parts[1]) if len(parts) > 1 else 1.0
            return cls(Policy.RANDOM, seed=seed, jitter=jitter)
        if name == "adversary":
            return cls(Policy.ADVERSARY, rules=tuple(json.loads(Path(rest).read_text())))
        raise ConfigError(f"unknown scheduler {text!r}")

    def to_dict(self) -> dict:
        return {"policy": self.policy.value, "seed": self.seed, "jitter": self.jitter,
                "bound": self.bound,
                "rules": [{"delay": r.delay, **{k: None if getattr(r, k) is None else sorted(getattr(r, k))
                                                for k in ("senders", "kinds", "rounds", "receivers")}}
                          for r in self.rules]}


def transmit(e: Envelope, src: int, dst: int, model: LatencyModel, sched: Scheduler,
             now: float) -> float:
    """Virtual delivery time of ``e`` sent from ``src`` to ``dst`` at ``now``."""
    if src == dst:
        return now
    return now + model.delay(src, dst) + sched.adjust(e, dst)


# -- Byzantine behaviors ---------------------------------------------------------

class ByzantineBehavior(str, enum.Enum):
    B = "B"    # both values (and BOT where allowed)
    F = "F"    # flip
    H = "H"    # normal to front half, flipped to back half
    HF = "HF"  # 0 to front half, 1 to back half
    M = "M"    # mute
    N = "N"    # behaves correctly


def _flip(kind: Kind, v):
    if v in (0, 1):
        return BOT if kind in BOT_KINDS else negate(v)
    return v


def apply_behavior(b: ByzantineBehavior, e: Envelope, roster: list[int],
                   reissue: Callable[[Envelope, int], Envelope]) -> list[tuple[int, Envelope]]:
    """Per-recipient envelopes a faulty sender emits for broadcast ``e``.

    ``roster`` is the ordered list of non-faulty processes.  ``reissue(e, v)``
    re-creates ``e`` with value ``v`` (re-signed, best available proof).
    Coin traffic and the COIN marker pass through unchanged except under M.
    """
    b = ByzantineBehavior(b)
    if b is ByzantineBehavior.M:
        return []
    valued = e.kind not in (Kind.COIN_SHARE, Kind.COIN_ECHO) and e.value in (0, 1, BOT)
    if b is ByzantineBehavior.N or not valued:
        return [(p, e) for p in roster]
    half = len(roster) // 2
    front, back = roster[:half], roster[half:]
    if b is ByzantineBehavior.B:
        values = [0, 1] + ([BOT] if e.kind in BOT_KINDS else [])
        copies = [e if v == e.value else reissue(e, v) for v in values]
        return [(p, c) for c in copies for p in roster]
    if b is ByzantineBehavior.F:
        v = _flip(e.kind, e.value)
        c = e if v == e.value else reissue(e, v)
        return [(p, c) for p in roster]
    if b is ByzantineBehavior.H:
        v = negate(e.value) if e.value in (0, 1) else e.value
        c = e if v == e.value else reissue(e, v)
        return [(p, e) for p in front] + [(p, c) for p in back]
    # HF
    if e.value not in (0, 1):
        return [(p, e) for p in roster]
    zero = e if e.value == 0 else reissue(e, 0)
    one = e if e.value == 1 else reissue(e, 1)
    return [(p, zero) for p in front] + [(p, one) for p in back]


def faulty_ids(n: int, f: int) -> list[int]:
    """Faulty processes, spread evenly over the id space."""
    return sorted({k * n // f for k in range(f)}) if f else []


# -- world -----------------------------------------------------------------------

@dataclass
class WorldConfig:
    protocol: ProtocolConfig
    latency: LatencyModel = field(default_factory=LatencyModel)
    scheduler: Scheduler = field(default_factory=Scheduler)
    faults: int = 0
    behavior: ByzantineBehavior = ByzantineBehavior.N
    cpu_model: bool = False
    costs: CostModel = field(default_factory=CostModel)
    key_seed: int = 0
    round_cap: int = ROUND_CAP

    def __post_init__(self):
        self.behavior = ByzantineBehavior(self.behavior)
        if self.faults < 0 or self.faults > self.protocol.params.t:
            raise ConfigError(f"faulty count {self.faults} exceeds t={self.protocol.params.t}")

    @property
    def n(self) -> int:
        return self.protocol.params.n

    def crypto(self) -> CryptoConfig:
        p = self.protocol
        fam = p.coin.scheme.family
        if p.signed:
            return CryptoConfig(p.signature, fam, p.include_proofs, False, self.costs)
        return CryptoConfig(None, fam, False, True, self.costs)

    def to_dict(self) -> dict:
        p = self.protocol
        return {
            "algorithm": p.algorithm, "n": p.params.n, "coin": p.coin.scheme.value,
            "coin_threshold": p.coin.threshold, "presets": p.coin.presets, "coin_seed": p.coin.seed,
            "include_proofs": p.include_proofs if p.signed else None, "combine_coin": p.combine_coin,
            "signature": p.signature, "latency": self.latency.to_dict(),
            "scheduler": self.scheduler.to_dict(), "faults": self.faults,
            "behavior": self.behavior.value, "cpu_model": self.cpu_model, "key_seed": self.key_seed,
            "round_cap": self.round_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        kw = {}
        for k in ("presets", "coin_seed", "include_proofs", "combine_coin", "signature"):
            if k in d:
                kw[k] = d[k]
        proto = ProtocolConfig.default(d["algorithm"], int(d["n"]), coin_scheme=d.get("coin", "TC"),
                                       coin_threshold=d.get("coin_threshold"), **kw)
        lat = d.get("latency", {})
        lat = LatencyModel.parse(lat) if isinstance(lat, str) else LatencyModel(**lat)
        sch = d.get("scheduler", {})
        sch = Scheduler.parse(sch) if isinstance(sch, str) else Scheduler(**sch)
        costs = CostModel.load(d["costs"]) if "costs" in d else CostModel()
        return cls(proto, lat, sch, int(d.get("faults", 0)), d.get("behavior", "N"),
                   bool(d.get("cpu_model", False)), costs, int(d.get("key_seed", 0)),
                   int(d.get("round_cap", ROUND_CAP)))

    @classmethod
    def load(cls, path) -> "WorldConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class NodeMetrics:
    messages_sent: int = 0
    bytes_sent: int = 0
    broadcasts: int = 0          # consensus broadcasts (merged ones included)
    coin_broadcasts: int = 0     # stand-alone share / echo broadcasts
    broadcasts_at_decision: Optional[int] = None
    decision_time: Optional[float] = None
    decision_round: Optional[int] = None
    decision: Optional[int] = None
    # broadcast steps per round: consensus messages by their round, stand-alone
    # coin messages by the round of the coin; proofs of decision left out
    steps_by_round: dict = field(default_factory=dict)


class Node:
    def __init__(self, world: "World", pid: int, behavior: Optional[ByzantineBehavior]):
        self.world = world
        self.pid = pid
        self.behavior = behavior
        cfg = world.cfg.protocol
        self.protocol = make_protocol(cfg, pid, world.instance, world.keyring)
        self.coin = CoinEngine(pid, world.instance, cfg.params, cfg.coin, world.keyring)
        self.metrics = NodeMetrics()
        self.busy = 0.0
        self.seen_tokens: set = set()

    @property
    def faulty(self) -> bool:
        return self.behavior is not None


class LivenessFailure(RuntimeError):
    pass


@dataclass
class RunResult:
    instance: int
    proposals: list
    faulty: list
    metrics: dict
    decisions: dict
    coins: dict
    trace: list
    end_time: float
    liveness_failure: Optional[str] = None


class World:
    """One consensus instance over ``n`` simulated processes."""

    def __init__(self, cfg: WorldConfig, instance: int = 0, keyring: Optional[Keyring] = None,
                 trace: bool = False):
        self.cfg = cfg
        self.instance = instance
        self.keyring = keyring or Keyring(cfg.protocol.params, cfg.key_seed)
        self.crypto = cfg.crypto()
        self.latency = cfg.latency
        self.sched = cfg.scheduler
        self.latency.reset(instance)
        self.sched.reset(instance)
        n = cfg.n
        self.faulty = faulty_ids(n, cfg.faults)
        self.roster = [p for p in range(n) if p not in self.faulty]
        self.nodes = [Node(self, p, cfg.behavior if p in self.faulty else None) for p in range(n)]
        self.queue: list = []
        self.seq = 0
        self.now = 0.0
        self.trace: Optional[list] = [] if trace else None
        self._size_cache: dict = {}
        # ("point" | "reveal", pid, round, virtual time) for coin audits
        self.coin_log: list = []
        coin = cfg.protocol.coin
        self._coin_threshold = coin.threshold
        if self.trace is not None:
            for node in self.nodes:
                node.protocol.on_transition = self._recorder(node)

    def _recorder(self, node: Node):
        def rec(d):
            d = dict(d)
            d["time"] = round(self._clock(node), 6)
            self.trace.append(d)
        return rec

    # -- cpu --

    def _clock(self, node: Node) -> float:
        return max(self.now, node.busy) if self.cfg.cpu_model else self.now

    def _charge(self, node: Node, ms: float):
        if self.cfg.cpu_model and ms:
            node.busy = max(self.now, node.busy) + ms

    def _op(self, kind: str) -> float:
        return op_cost(kind, self.crypto, self.cfg.n, self._coin_threshold)

    # -- sending --

    def _size(self, e: Envelope) -> int:
        key = (e.kind, e.proof, e.coin_share is not None)
        s = self._size_cache.get(key)
        if s is None:
            s = self._size_cache[key] = message_size(e, self.crypto)
        return s

    def _push(self, t: float, dst: int, e: Envelope):
        self.seq += 1
        heapq.heappush(self.queue, (t, self.seq, dst, e))

    def _send_all(self, node: Node, e: Envelope, step_round: int, coin_only: bool = False):
        m = node.metrics
        if coin_only:
            m.coin_broadcasts += 1
        else:
            m.broadcasts += 1
        if e.kind is not Kind.PROOF_OF_DECISION:
            m.steps_by_round[step_round] = m.steps_by_round.get(step_round, 0) + 1
        crypto = self.crypto
        if crypto.signature is not None and not coin_only:
            self._charge(node, self._op("sign"))
        t0 = self._clock(node)
        if node.faulty:
            out = apply_behavior(node.behavior, e, self.roster, lambda env, v: self._reissue(node, env, v))
            out += [(p, e) for p in self.faulty]
        else:
            out = [(p, e) for p in range(self.cfg.n)]
        if node.faulty and node.behavior is ByzantineBehavior.M:
            out = [(node.pid, e)]
        for dst, env in out:
            if dst == node.pid:
                self._push(t0, dst, env)
                continue
            if crypto.encrypted:
                self._charge(node, self._op("encrypt"))
                t0 = self._clock(node)
            m.messages_sent += 1
            m.bytes_sent += self._size(env)
            self._push(transmit(env, node.pid, dst, self.latency, self.sched, t0), dst, env)

    def _reissue(self, node: Node, e: Envelope, v) -> Envelope:
        proof = node.protocol.proof_for(e.kind, e.round, v) if self.cfg.protocol.signed else None
        if not self.cfg.protocol.include_proofs and e.kind is not Kind.PROOF_OF_DECISION:
            proof = None
        sig = None
        if e.sig is not None:
            sig = self.keyring.sign(node.pid, content_bytes(e.instance, e.round, e.kind, v), e.sig.scheme)
        return replace(e, value=v, proof=proof, sig=sig)

    def _act(self, node: Node, actions: list):
        for a in actions:
            if isinstance(a, Broadcast):
                e = a.envelope
                if a.coin_round is not None:
                    share = self._make_share(node, a.coin_round)
                    e = replace(e, coin_share=share.payload_hint)
                self._send_all(node, e, e.round)
            elif isinstance(a, RequestCoinShare):
                self.coin_log.append(("point", node.pid, a.round, self._clock(node)))
                for ce in node.coin.request(a.round):
                    if ce.kind is Kind.COIN_SHARE:
                        self._charge(node, self._op("share_gen"))
                    self._send_all(node, ce, ce.round, coin_only=True)
            elif isinstance(a, Decide):
                m = node.metrics
                if m.decision is None:
                    m.decision = a.value
                    m.decision_round = a.round
                    m.decision_time = self._clock(node)
                    m.broadcasts_at_decision = m.broadcasts
            elif isinstance(a, Terminate):
                pass

    def _make_share(self, node: Node, rnd: int) -> Envelope:
        self.coin_log.append(("point", node.pid, rnd, self._clock(node)))
        shares = [e for e in node.coin.request(rnd) if e.kind is Kind.COIN_SHARE]
        self._charge(node, self._op("share_gen"))
        return shares[0]

    # -- receiving --

    def _receive(self, node: Node, e: Envelope):
        crypto = self.crypto
        k = e.kind
        if e.sender != node.pid:
            if crypto.encrypted:
                self._charge(node, self._op("decrypt"))
            if crypto.signature is not None and k not in (Kind.COIN_SHARE, Kind.COIN_ECHO):
                self._charge(node, self._op("verify") * self._fresh_tokens(node, e))
        if k is Kind.COIN_ECHO:
            for ce in node.coin.on_echo(e):
                self._charge(node, self._op("share_gen"))
                self._send_all(node, ce, ce.round, coin_only=True)
            return
        if k is Kind.COIN_SHARE:
            self._absorb(node, e)
            return
        if e.coin_share is not None and e.round >= 2:
            self._absorb(node, Envelope(e.sender, e.instance, e.round - 1, Kind.COIN_SHARE,
                                        payload_hint=e.coin_share))
        self._act(node, node.protocol.handle(e))

    def _absorb(self, node: Node, share: Envelope):
        v = node.coin.on_share(share)
        if v is not None:
            self._charge(node, self._op("coin_gen"))
            self.coin_log.append(("reveal", node.pid, share.round, self._clock(node)))
            self._act(node, node.protocol.handle(CoinRevealed(share.round, v)))

    def _fresh_tokens(self, node: Node, e: Envelope) -> int:
        """Signatures in ``e`` this node has not verified before."""
        toks = [e.sig] if e.sig is not None else []
        if e.proof is not None:
            toks.extend(e.proof.tokens())
        fresh = 0
        for t in toks:
            key = t if isinstance(t, ThresholdSignatureToken) else (t.signer, t.digest, t.scheme)
            if key not in node.seen_tokens:
                node.seen_tokens.add(key)
                fresh += 1
        return fresh

    # -- main loop --

    def run(self, proposals) -> RunResult:
        if len(proposals) != self.cfg.n:
            raise ValueError("one proposal per process")
        for node, b in zip(self.nodes, proposals):
            self._act(node, node.protocol.start(int(b)))
        failure = None
        cap = self.cfg.round_cap
        honest = [self.nodes[p] for p in self.roster]
        while self.queue:
            t, _, dst, e = heapq.heappop(self.queue)
            self.now = t
            node = self.nodes[dst]
            self._receive(node, e)
            if node.protocol.round > cap and not node.faulty and node.metrics.decision is None:
                failure = f"process {dst} passed round {cap} without deciding"
                break
        if failure is None:
            stuck = [n.pid for n in honest if n.metrics.decision is None]
            if stuck:
                failure = f"processes {stuck} never decided (network quiescent)"
        end = max([self.now] + [n.busy for n in self.nodes]) if self.cfg.cpu_model else self.now
        return RunResult(
            instance=self.instance,
            proposals=[int(b) for b in proposals],
            faulty=list(self.faulty),
            metrics={n.pid: n.metrics for n in self.nodes},
            decisions={n.pid: (n.metrics.decision, n.metrics.decision_round) for n in honest},
            coins={n.pid: n.coin.trace() for n in self.nodes},
            trace=self.trace or [],
            end_time=end,
            liveness_failure=failure,
        )


def run(world: WorldConfig, proposals, instance: int = 0, keyring: Optional[Keyring] = None,
        trace: bool = False) -> RunResult:
    return World(world, instance, keyring, trace).run(proposals)


def write_trace(records: list, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


__all__ = ["ROUND_CAP", "LatencyKind", "LatencyModel", "REGION_PRESETS", "Policy", "DelayRule",
           "Scheduler", "transmit", "ByzantineBehavior", "apply_behavior", "faulty_ids",
           "WorldConfig", "NodeMetrics", "World", "RunResult", "LivenessFailure", "run",
           "write_trace", "CoinScheme"]
