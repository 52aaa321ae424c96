"""Signature-free algorithms: NS1, NS2 and their combination NS3.

Messages travel over authenticated channels, so validity is established by
quorums instead of proofs: a value becomes *valid* in a round (or stage)
once n-t processes sent it in an ``S_VAL``-type message, and any value seen
from t+1 distinct senders is echoed.

NS1-type rounds: S_VAL, then one AUXM with a valid value, then the coin;
only the coin value can be decided.  A process whose estimate equals the
previous round's coin skips its S_VAL; that value stays valid by carry-over
(it was valid in the previous round and the coin picked it).

NS2-type rounds run the S_VAL/AUX pattern twice.  Stage 1 narrows the
round to a single binary value or BOT, AUX_BOTH reports the locally valid
set between the stages, and stage 2 decides on n-t matching AUX_STAGE2.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Optional

from ..core import BOT, Envelope, Kind, negate
from .base import Protocol

# AUX_BOTH payload <-> set of valid binary values
_BOTH_DECODE = {0: frozenset({0}), 1: frozenset({1}), BOT: frozenset({0, 1})}


def encode_set(values) -> int:
    s = frozenset(values)
    return BOT if s == {0, 1} else next(iter(s))


class UnsignedProtocol(Protocol):

    def __init__(self, cfg, pid, instance=0, keyring=None):
        super().__init__(cfg, pid, instance, keyring)
        # (round, kind) -> value -> senders
        self.sval: dict = defaultdict(lambda: defaultdict(set))
        self.aux: dict = defaultdict(lambda: defaultdict(set))
        self.sent: dict = defaultdict(set)
        self.entered: set[int] = set()
        self.stage2: set[int] = set()
        self.round_done: set[int] = set()
        self.waiting_coin: set[int] = set()
        self.wake: Optional[tuple[int, Kind, int]] = None

    def ns1_round(self, rnd: int) -> bool:
        alg = self.cfg.algorithm
        return alg == "NS1" or (alg == "NS3" and rnd <= 2)

    # -- validity --

    def valid(self, rnd: int, skind: Kind, b: int) -> bool:
        if len(self.sval[(rnd, skind)].get(b, ())) >= self.large:
            return True
        # carry-over of the previous coin's value in NS1-type rounds
        return (skind is Kind.S_VAL and rnd >= 2 and b in (0, 1)
                and self.ns1_round(rnd - 1) and self.coins.get(rnd - 1) == b
                and self.valid(rnd - 1, Kind.S_VAL, b))

    def valid_set(self, rnd: int, skind: Kind, domain=(0, 1)) -> set:
        return {b for b in domain if self.valid(rnd, skind, b)}

    def _value_ok(self, rnd: int, akind: Kind, v: int) -> bool:
        if akind is Kind.AUXM:
            return self.valid(rnd, Kind.S_VAL, v)
        if akind is Kind.AUX_STAGE1:
            return self.valid(rnd, Kind.S_VAL_S1, v)
        if akind is Kind.AUX_STAGE2:
            return self.valid(rnd, Kind.S_VAL_S2, v)
        if akind is Kind.AUX_BOTH:
            return _BOTH_DECODE[v] <= self.valid_set(rnd, Kind.S_VAL_S1)
        raise ValueError(akind)

    def count(self, rnd: int, akind: Kind, v: int) -> int:
        senders = self.aux[(rnd, akind)].get(v)
        if not senders or not self._value_ok(rnd, akind, v):
            return 0
        return len(senders)

    def counted(self, rnd: int, akind: Kind) -> dict[int, set]:
        return {v: s for v, s in self.aux[(rnd, akind)].items() if s and self._value_ok(rnd, akind, v)}

    def total(self, rnd: int, akind: Kind) -> int:
        c = self.counted(rnd, akind)
        if len(c) == 1:
            return len(next(iter(c.values())))
        return len(set().union(*c.values())) if c else 0

    # -- sending --

    def _send_once(self, kind: Kind, rnd: int, value: int) -> bool:
        if value in self.sent[(rnd, kind)]:
            return False
        self.sent[(rnd, kind)].add(value)
        self._broadcast(kind, rnd, value)
        return True

    # -- events --

    def _start(self):
        self.round = 1

    def _on_envelope(self, env: Envelope) -> bool:
        k = env.kind
        v = env.value
        if k in (Kind.S_VAL, Kind.S_VAL_S1, Kind.S_VAL_S2):
            allowed = (0, 1, BOT) if k is Kind.S_VAL_S2 else (0, 1)
            if v not in allowed or env.round < 1:
                return False
            senders = self.sval[(env.round, k)][v]
            senders.add(env.sender)
            if len(senders) >= self.small:
                # echo rule
                self._send_once(k, env.round, v)
            return True
        if k in (Kind.AUXM, Kind.AUX_STAGE1, Kind.AUX_STAGE2, Kind.AUX_BOTH):
            allowed = (0, 1, BOT) if k in (Kind.AUX_STAGE2, Kind.AUX_BOTH) else (0, 1)
            if v not in allowed or env.round < 1:
                return False
            self.aux[(env.round, k)][v].add(env.sender)
            return True
        return False

    def _progress(self):
        while True:
            before = (self.round, self.terminated, len(self._out), self.decided)
            self._stragglers()
            if self.terminated:
                self._check_wake()
            else:
                if self.ns1_round(self.round):
                    self._step_ns1(self.round)
                else:
                    self._step_ns2(self.round)
            if before == (self.round, self.terminated, len(self._out), self.decided):
                return

    def _stragglers(self):
        if self.decided is not None:
            return
        for r in sorted(self.round_done | {self.round}):
            late = r < self.round
            if self.ns1_round(r):
                c = self.coins.get(r)
                if r in self.coin_requested and c is not None and self.count(r, Kind.AUXM, c) >= self.large:
                    self.late_decision = late
                    self._decide(c, r)
                    return
            else:
                for b in (1, 0):
                    if self.count(r, Kind.AUX_STAGE2, b) >= self.large:
                        self.late_decision = late
                        self._decide(b, r)
                        return

    def _check_wake(self):
        if self.wake is None:
            return
        r, skind, b = self.wake
        if self.valid(r, skind, b):
            self.wake = None
            self.terminated = False
            self._advance(r)

    def _enter(self, r: int) -> bool:
        if r in self.entered:
            return False
        self.entered.add(r)
        return True

    def _step_ns1(self, r: int):
        if self._enter(r):
            if r == 1 or self.coins.get(r - 1) != self.est:
                self._send_once(Kind.S_VAL, r, self.est)
        if not self.sent[(r, Kind.AUXM)]:
            choice = self._prefer(self.valid_set(r, Kind.S_VAL))
            if choice is not None:
                self._send_once(Kind.AUXM, r, choice)
        if r not in self.coin_requested and self.total(r, Kind.AUXM) >= self.large:
            self._reach_coin_point(r)
        if r in self.coin_requested and r in self.coins:
            c = self.coins[r]
            if self.decided is None and self.count(r, Kind.AUXM, c) >= self.large:
                self._decide(c, r)
            if self.decided is not None:
                self.est = self.decided[0]
            else:
                single = [b for b in (1, 0) if self.count(r, Kind.AUXM, b) >= self.large]
                self.est = single[0] if single else c
                if not single:
                    self.coin_estimates.add(r)
            self._end_round(r)

    def _step_ns2(self, r: int):
        if self._enter(r):
            self._send_once(Kind.S_VAL_S1, r, self.est)
        if not self.sent[(r, Kind.AUX_STAGE1)]:
            choice = self._prefer(self.valid_set(r, Kind.S_VAL_S1))
            if choice is not None:
                self._send_once(Kind.AUX_STAGE1, r, choice)
        stage1_total = self.total(r, Kind.AUX_STAGE1)
        if not self.sent[(r, Kind.AUX_BOTH)] and stage1_total >= self.large:
            self._send_once(Kind.AUX_BOTH, r, encode_set(self.valid_set(r, Kind.S_VAL_S1)))
        if (r not in self.stage2 and stage1_total >= self.large
                and self.total(r, Kind.AUX_BOTH) >= self.large):
            self.stage2.add(r)
            vals = set(self.counted(r, Kind.AUX_STAGE1))
            w = next(iter(vals)) if len(vals) == 1 else BOT
            self._send_once(Kind.S_VAL_S2, r, w)
        if r in self.stage2 and not self.sent[(r, Kind.AUX_STAGE2)]:
            choice = self._prefer(self.valid_set(r, Kind.S_VAL_S2, (0, 1, BOT)))
            if choice is not None:
                self._send_once(Kind.AUX_STAGE2, r, choice)
        if r not in self.round_done and r not in self.waiting_coin:
            if self.total(r, Kind.AUX_STAGE2) < self.large:
                return
            if self.decided is not None:
                self.est = self.decided[0]
                self._end_round(r)
                return
            self._reach_coin_point(r)
            seen = [b for b in (1, 0) if self.count(r, Kind.AUX_STAGE2, b) > 0]
            if seen:
                # a binary value seen fixes the estimate; the coin is not awaited
                self.est = seen[0]
                self._end_round(r)
                return
            self.waiting_coin.add(r)
        if r in self.waiting_coin and r in self.coins:
            self.waiting_coin.discard(r)
            if self.decided is not None:
                self.est = self.decided[0]
            else:
                self.est = self.coins[r]
                self.coin_estimates.add(r)
            self._end_round(r)

    def _end_round(self, r: int):
        self.round_done.add(r)
        if self.decided is None:
            self._advance(r)
            return
        b, d = self.decided
        nb = negate(b)
        if self.ns1_round(r):
            if self.coins.get(r) == b and not self.valid(r, Kind.S_VAL, nb):
                self._halt((r, Kind.S_VAL, nb))
            else:
                self._advance(r)
        elif r >= d + 1:
            self._halt(None)
        elif self.valid(r, Kind.S_VAL_S1, nb):
            self._advance(r)
        else:
            self._halt((r, Kind.S_VAL_S1, nb))

    def _halt(self, wake):
        self.wake = wake
        self._terminate()

    def _advance(self, r: int):
        self.round = r + 1


class NS1(UnsignedProtocol):
    pass


class NS2(UnsignedProtocol):
    pass


class NS3(UnsignedProtocol):
    pass
