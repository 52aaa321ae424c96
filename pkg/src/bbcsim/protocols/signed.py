"""Signature-based algorithms: S1, S2 and their combination S3.

Every consensus message is signed and, when proofs are on, carries a
validity proof built from signatures of an earlier round.  Round 0 is the
signed proposal broadcast; its proofs need t+1 signatures, every later
proof needs n-t.

Round shapes:

* s1-type (S1, and S3 rounds 1-2): one AUXM per round, then the coin.
  Only the coin's value can be decided.
* s2-type (S2, and S3 rounds >= 3): PRE_VOTE, then MAIN_VOTE carrying a
  single value or BOT, then the coin.  Decisions do not depend on the
  coin of the deciding round.

A value b is valid for round k when one of these proofs holds:

* chain: signatures on the first message of some round r' < k with value
  b (t+1 of them if r' = 0, else n-t), and every round in r'+1..k-1 is
  s1-type with coin b;
* form A (k-1 is s2-type): n-t PRE_VOTE(k-1, b) signatures;
* form B (k-1 is s2-type): n-t MAIN_VOTE(k-1, BOT) signatures and the
  coin of k-1 is b.

With ``combine_coin`` the first message of round r+1 is broadcast at the
coin point of round r together with the coin share.  When its value
depends on the coin it carries the COIN marker instead, which receivers
resolve once they learn coin(r).
"""
from __future__ import annotations

from collections import defaultdict
from typing import Optional

from ..core import (BOT, COIN, Envelope, Kind, ProofForm, ValidityProof, content_bytes)
from ..primitives import PLAIN, THRESH_LARGE, THRESH_SMALL, SignatureToken, digest_of
from .base import Broadcast, Protocol


class SignedProtocol(Protocol):

    def __init__(self, cfg, pid, instance=0, keyring=None):
        if keyring is None:
            raise ValueError("signed algorithms need a keyring")
        super().__init__(cfg, pid, instance, keyring)
        self.tbls = cfg.signature == "TBLS"
        # (round, kind) -> value -> {sender: token}; COIN-marked messages are
        # filed under the value they resolve to
        self.tally: dict = defaultdict(lambda: defaultdict(dict))
        self.senders: dict = defaultdict(set)
        self.pending: dict = defaultdict(list)
        # proof that value b is valid for round r, taken from first messages
        self.vproof: dict = {}
        # proof carried by MAIN_VOTE(r, b)
        self.mvproof: dict = {}
        self.est_proof: Optional[ValidityProof] = None
        self.opened: set[int] = set()
        self.main_sent: set[int] = set()
        self.commit: dict[int, int] = {}
        self.memo = keyring.memo.setdefault((cfg, instance), {})

    # -- round geometry --

    def s1_round(self, r: int) -> bool:
        return r >= 1 and (self.cfg.algorithm == "S1" or (self.cfg.algorithm == "S3" and r <= 2))

    def s2_round(self, r: int) -> bool:
        return r >= 1 and not self.s1_round(r)

    def first_kind(self, r: int) -> Kind:
        if r == 0:
            return Kind.PRE_VOTE if self.cfg.algorithm == "S2" else Kind.AUXM
        return Kind.AUXM if self.s1_round(r) else Kind.PRE_VOTE

    def sig_scheme(self, r: int) -> str:
        if not self.tbls:
            return PLAIN
        return THRESH_SMALL if r == 0 else THRESH_LARGE

    # -- proofs --

    def _sigs_ok(self, proof: ValidityProof, rnd: int, kind: Kind, value: int, need: int) -> bool:
        if proof.proven_round != rnd or proof.kind is not kind or proof.proven_value != value:
            return False
        scheme = self.sig_scheme(rnd)
        if proof.form is ProofForm.THRESHOLD_SIG:
            if not self.tbls or len(proof.sigs) != 1:
                return False
            return self.keyring.verify_threshold(
                content_bytes(self.instance, rnd, kind, value), proof.sigs[0], scheme)
        if proof.form is not ProofForm.SIG_SET:
            return False
        allowed = {digest_of(content_bytes(self.instance, rnd, kind, value))}
        if value in (0, 1) and rnd >= 2 and self.cfg.combine_coin and self.coin_of(rnd - 1) == value:
            allowed.add(digest_of(content_bytes(self.instance, rnd, kind, COIN)))
        signers = set()
        for tok in proof.sigs:
            if (isinstance(tok, SignatureToken) and tok.scheme == scheme
                    and tok.digest in allowed and self.keyring.check(tok)):
                signers.add(tok.signer)
        return len(signers) >= need

    def first_proof_ok(self, proof: Optional[ValidityProof], k: int, b: int) -> bool:
        """Does ``proof`` show binary ``b`` valid for round ``k``?"""
        if proof is None:
            return False
        key = ("first", k, b, proof)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._first_proof_ok(proof, k, b)
        return hit

    def _first_proof_ok(self, proof: ValidityProof, k: int, b: int) -> bool:
        if proof.form is ProofForm.DUAL or k < 1:
            return False
        if k >= 2 and self.s2_round(k - 1):
            if proof.kind is Kind.MAIN_VOTE:
                return (self.coin_of(k - 1) == b
                        and self._sigs_ok(proof, k - 1, Kind.MAIN_VOTE, BOT, self.large))
            return self._sigs_ok(proof, k - 1, Kind.PRE_VOTE, b, self.large)
        r1 = proof.proven_round
        if not 0 <= r1 < k:
            return False
        for j in range(r1 + 1, k):
            if not self.s1_round(j) or self.coin_of(j) != b:
                return False
        need = self.small if r1 == 0 else self.large
        return self._sigs_ok(proof, r1, self.first_kind(r1), b, need)

    def coin_marked_ok(self, proof: Optional[ValidityProof], k: int) -> bool:
        """Proof for a COIN-marked first message of round ``k``."""
        if proof is None or k < 2:
            return False
        key = ("coin", k, proof)
        hit = self.memo.get(key)
        if hit is None:
            if self.s1_round(k - 1):
                hit = (proof.form is ProofForm.DUAL and len(proof.parts) == 2
                       and all(self.first_proof_ok(proof.parts[b], k - 1, b) for b in (0, 1)))
            else:
                hit = (proof.form is not ProofForm.DUAL
                       and self._sigs_ok(proof, k - 1, Kind.MAIN_VOTE, BOT, self.large))
            self.memo[key] = hit
        return hit

    def main_proof_ok(self, proof: Optional[ValidityProof], r: int, v: int) -> bool:
        if proof is None:
            return False
        key = ("main", r, v, proof)
        hit = self.memo.get(key)
        if hit is None:
            if v == BOT:
                hit = (proof.form is ProofForm.DUAL and len(proof.parts) == 2
                       and all(self.first_proof_ok(proof.parts[b], r, b) for b in (0, 1)))
            else:
                hit = proof.form is not ProofForm.DUAL and self._sigs_ok(
                    proof, r, Kind.PRE_VOTE, v, self.large)
            self.memo[key] = hit
        return hit

    def decision_proof_ok(self, proof: Optional[ValidityProof], r: int, b: int) -> bool:
        if proof is None or r < 1 or proof.form is ProofForm.DUAL:
            return False
        key = ("pod", r, b, proof)
        hit = self.memo.get(key)
        if hit is None:
            if self.s1_round(r):
                hit = self.coin_of(r) == b and self._sigs_ok(proof, r, Kind.AUXM, b, self.large)
            else:
                hit = self._sigs_ok(proof, r, Kind.MAIN_VOTE, b, self.large)
            self.memo[key] = hit
        return hit

    def make_proof(self, rnd: int, kind: Kind, value: int, need: int) -> Optional[ValidityProof]:
        entries = self.tally.get((rnd, kind), {}).get(value, {})
        if len(entries) < need:
            return None
        if self.tbls:
            d = digest_of(content_bytes(self.instance, rnd, kind, value))
            pure = [tok for tok in entries.values() if tok.digest == d]
            if len(pure) >= need:
                tok = self.keyring.combine(pure, self.sig_scheme(rnd))
                return ValidityProof(ProofForm.THRESHOLD_SIG, (tok,), rnd, value, kind)
        sigs = tuple(sorted(entries.values(), key=lambda t: t.signer)[:need])
        return ValidityProof(ProofForm.SIG_SET, sigs, rnd, value, kind)

    @staticmethod
    def dual(p0, p1) -> Optional[ValidityProof]:
        if p0 is None or p1 is None:
            return None
        return ValidityProof(ProofForm.DUAL, (), 0, BOT, None, (p0, p1))

    # -- sending --

    def _send(self, kind: Kind, rnd: int, value: int, proof=None, coin_round=None):
        if not self.cfg.include_proofs and kind is not Kind.PROOF_OF_DECISION:
            proof = None
        sig = self.keyring.sign(self.pid, content_bytes(self.instance, rnd, kind, value),
                                self.sig_scheme(rnd))
        env = Envelope(self.pid, self.instance, rnd, kind, value, proof, sig)
        self.broadcasts.append(env)
        self._out.append(Broadcast(env, coin_round))

    def _open(self, r: int):
        if r not in self.opened:
            self.opened.add(r)
            self._send(self.first_kind(r), r, self.est, self.est_proof)

    def _decide_and_stop(self, b: int, r: int):
        if self._decide(b, r):
            kind = Kind.AUXM if self.s1_round(r) else Kind.MAIN_VOTE
            self._send(Kind.PROOF_OF_DECISION, r, b, self.make_proof(r, kind, b, self.large))
        self._terminate()

    # -- receiving --

    def _start(self):
        self.round = 0
        self._open(0)

    def _on_envelope(self, env: Envelope) -> bool:
        r, k, v = env.round, env.kind, env.value
        if k is Kind.COIN_SHARE or k is Kind.COIN_ECHO:
            return False
        if r < 0 or (r == 0 and k is not self.first_kind(0)):
            return False
        tok = env.sig
        if not (isinstance(tok, SignatureToken) and tok.scheme == self.sig_scheme(r)
                and self.keyring.verify(env.sender, content_bytes(self.instance, r, k, v), tok)):
            return False
        proofs = self.cfg.include_proofs
        if k is Kind.PROOF_OF_DECISION:
            if v not in (0, 1) or not self.decision_proof_ok(env.proof, r, v):
                return False
            if not self.terminated:
                self._decide_and_stop_remote(v, r, env.proof)
            return True
        if r >= 1 and k is not self.first_kind(r) and not (k is Kind.MAIN_VOTE and self.s2_round(r)):
            return False
        if k is Kind.MAIN_VOTE:
            if v not in (0, 1, BOT) or (proofs and not self.main_proof_ok(env.proof, r, v)):
                return False
            if v != BOT and env.proof is not None:
                self.mvproof.setdefault((r, v), env.proof)
            self._count(r, k, v, env.sender, tok)
            return True
        # first message of round r
        if v == COIN:
            if not self.cfg.combine_coin or r < 2 or (proofs and not self.coin_marked_ok(env.proof, r)):
                return False
            self.pending[(r, k)].append(env)
            return True
        if v not in (0, 1):
            return False
        if proofs and r >= 1 and not self.first_proof_ok(env.proof, r, v):
            return False
        if env.proof is not None:
            self.vproof.setdefault((r, v), env.proof)
        self._count(r, k, v, env.sender, tok)
        return True

    def _decide_and_stop_remote(self, b: int, r: int, proof: ValidityProof):
        # relay once: the sender may be the only process that decided by the
        # rules, and a faulty one can hand its proof to a few processes only
        if self._decide(b, max(r, self.round)):
            self._send(Kind.PROOF_OF_DECISION, r, b, proof)
        self._terminate()

    def _count(self, r, kind, value, sender, tok):
        self.tally[(r, kind)][value].setdefault(sender, tok)
        self.senders[(r, kind)].add(sender)

    def _resolve_pending(self):
        for (r, kind), envs in list(self.pending.items()):
            c = self.coins.get(r - 1)
            if c is None:
                continue
            for env in envs:
                p = env.proof
                if p is not None:
                    self.vproof.setdefault((r, c), p.parts[c] if p.form is ProofForm.DUAL else p)
                self._count(r, kind, c, env.sender, env.sig)
            del self.pending[(r, kind)]

    def count(self, r: int, kind: Kind, v: int) -> int:
        return len(self.tally.get((r, kind), {}).get(v, ()))

    # -- progress --

    def _progress(self):
        while not self.terminated:
            before = (self.round, len(self._out))
            self._resolve_pending()
            self._stragglers()
            if self.terminated:
                return
            r = self.round
            if r == 0:
                self._step_zero()
            elif self.s1_round(r):
                self._step_s1(r)
            else:
                self._step_s2(r)
            if before == (self.round, len(self._out)):
                return

    def _stragglers(self):
        for r in range(max(1, self.round - 3), self.round):
            if self.s1_round(r):
                c = self.coins.get(r)
                if c is not None and self.count(r, Kind.AUXM, c) >= self.large:
                    self.late_decision = True
                    self._decide_and_stop(c, r)
                    return
            else:
                for b in (1, 0):
                    if self.count(r, Kind.MAIN_VOTE, b) >= self.large:
                        self.late_decision = True
                        self._decide_and_stop(b, r)
                        return

    def _step_zero(self):
        kind = self.first_kind(0)
        if len(self.senders[(0, kind)]) < self.large:
            return
        b = 1 if self.count(0, kind, 1) >= self.small else 0
        self.est = b
        self.est_proof = self.make_proof(0, kind, b, self.small)
        self.round = 1

    def _coin_point(self, r: int, commit):
        """Reach the coin point; ``commit`` yields (value, proof) of the next first message."""
        if r in self.coin_requested:
            return
        if self.cfg.combine_coin and self.forced_coin(r) is None:
            self.coin_requested.add(r)
            value, proof = commit()
            self.commit[r] = value
            self.opened.add(r + 1)
            self._send(self.first_kind(r + 1), r + 1, value, proof, coin_round=r)
        else:
            self._reach_coin_point(r)

    def _step_s1(self, r: int):
        self._open(r)
        if r not in self.coin_requested and len(self.senders[(r, Kind.AUXM)]) >= self.large:
            self._coin_point(r, lambda: self._s1_commit(r))
        if r not in self.coin_requested or r not in self.coins:
            return
        c = self.coins[r]
        if self.count(r, Kind.AUXM, c) >= self.large:
            self._decide_and_stop(c, r)
            return
        if r in self.commit:
            self.est = c if self.commit[r] == COIN else self.commit[r]
            if self.commit[r] == COIN:
                self.coin_estimates.add(r)
        else:
            single = self._single(r)
            if single is not None:
                self.est = single
                self.est_proof = self.make_proof(r, Kind.AUXM, single, self.large)
            else:
                self.est = c
                self.est_proof = self.vproof.get((r, c))
                self.coin_estimates.add(r)
        self.round = r + 1

    def _single(self, r: int) -> Optional[int]:
        for b in (1, 0):
            if self.count(r, Kind.AUXM, b) >= self.large:
                return b
        return None

    def _s1_commit(self, r: int):
        single = self._single(r)
        if single is not None:
            return single, self.make_proof(r, Kind.AUXM, single, self.large)
        return COIN, self.dual(self.vproof.get((r, 0)), self.vproof.get((r, 1)))

    def _step_s2(self, r: int):
        self._open(r)
        if r not in self.main_sent and len(self.senders[(r, Kind.PRE_VOTE)]) >= self.large:
            self.main_sent.add(r)
            for b in (1, 0):
                if self.count(r, Kind.PRE_VOTE, b) >= self.large:
                    self._send(Kind.MAIN_VOTE, r, b, self.make_proof(r, Kind.PRE_VOTE, b, self.large))
                    break
            else:
                self._send(Kind.MAIN_VOTE, r, BOT,
                           self.dual(self.vproof.get((r, 0)), self.vproof.get((r, 1))))
        for b in (1, 0):
            if self.count(r, Kind.MAIN_VOTE, b) >= self.large:
                self._decide_and_stop(b, r)
                return
        if r not in self.coin_requested and len(self.senders[(r, Kind.MAIN_VOTE)]) >= self.large:
            self._coin_point(r, lambda: self._s2_commit(r))
        if r not in self.coin_requested or r not in self.coins:
            return
        if r in self.commit:
            value = self.commit[r]
        else:
            value, self.est_proof = self._s2_commit(r)
        if value == COIN:
            self.coin_estimates.add(r)
            value = self.coins[r]
        self.est = value
        self.round = r + 1

    def _s2_commit(self, r: int):
        for b in (1, 0):
            if self.count(r, Kind.MAIN_VOTE, b) > 0:
                return b, self.mvproof.get((r, b))
        return COIN, self.make_proof(r, Kind.MAIN_VOTE, BOT, self.large)

    # -- for Byzantine wrappers --

    def proof_for(self, kind: Kind, rnd: int, value: int):
        if kind is Kind.MAIN_VOTE:
            if value == BOT:
                return self.dual(self.vproof.get((rnd, 0)), self.vproof.get((rnd, 1)))
            return self.make_proof(rnd, Kind.PRE_VOTE, value, self.large)
        if kind is Kind.PROOF_OF_DECISION or rnd == 0 or value not in (0, 1):
            return None
        p = self.vproof.get((rnd, value))
        if p is None and value == self.est:
            p = self.est_proof
        return p


class S1(SignedProtocol):
    pass


class S2(SignedProtocol):
    pass


class S3(SignedProtocol):
    pass
