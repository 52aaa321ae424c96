"""Behavioral stand-ins for the cryptography, plus byte and CPU cost accounting.

Tokens are tagged records carrying a keyed MAC over the signed digest.  The
MAC keys live inside :class:`Keyring`, so a process can only obtain tokens
for itself through :meth:`Keyring.sign`, and a threshold token only through
:meth:`Keyring.combine` with enough distinct valid shares.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Envelope, Kind, ProofForm, SystemParams, ValidityProof

PLAIN = "PLAIN"
THRESH_SMALL = "THRESH_SMALL"
THRESH_LARGE = "THRESH_LARGE"


class InsufficientShares(ValueError):
    pass


class DigestMismatch(ValueError):
    pass


@lru_cache(maxsize=1 << 16)
def digest_of(content: bytes) -> bytes:
    return hashlib.blake2b(content, digest_size=16).digest()


@dataclass(frozen=True)
class SignatureToken:
    signer: int
    digest: bytes
    scheme: str
    mac: bytes

    def as_dict(self) -> dict:
        return {"signer": self.signer, "digest": self.digest.hex(), "scheme": self.scheme}


@dataclass(frozen=True)
class ThresholdSignatureToken:
    digest: bytes
    scheme: str
    mac: bytes
    canonical: bool = True

    def as_dict(self) -> dict:
        return {"digest": self.digest.hex(), "scheme": self.scheme}


class Keyring:
    """Trusted-setup output: per-process keys for plain and threshold signing."""

    def __init__(self, params: SystemParams, seed: int = 0):
        self.params = params
        base = seed.to_bytes(8, "little", signed=False)
        self._keys = {
            p: hashlib.blake2b(b"proc" + p.to_bytes(4, "little"), key=base, digest_size=16).digest()
            for p in range(params.n)
        }
        self._master = hashlib.blake2b(b"master", key=base, digest_size=16).digest()
        self._verified: dict = {}
        # shared memo for proof checks, keyed by the caller
        self.memo: dict = {}

    def threshold(self, scheme: str) -> int:
        if scheme == THRESH_SMALL:
            return self.params.quorum_small
        if scheme == THRESH_LARGE:
            return self.params.quorum_large
        raise ValueError(f"{scheme} is not a threshold scheme")

    def _mac(self, key: bytes, digest: bytes, scheme: str) -> bytes:
        return hashlib.blake2b(digest + scheme.encode(), key=key, digest_size=8).digest()

    def sign(self, signer: int, content: bytes, scheme: str = PLAIN) -> SignatureToken:
        if signer not in self._keys:
            raise KeyError(f"no key configured for process {signer}")
        d = digest_of(content)
        return SignatureToken(signer, d, scheme, self._mac(self._keys[signer], d, scheme))

    def verify(self, signer: int, content: bytes, token) -> bool:
        if not isinstance(token, SignatureToken) or token.signer != signer:
            return False
        if token.digest != digest_of(content):
            return False
        return self.check(token)

    def check(self, token) -> bool:
        """Structural validity of a token, independent of any content."""
        hit = self._verified.get(token)
        if hit is not None:
            return hit
        if isinstance(token, SignatureToken):
            key = self._keys.get(token.signer)
            ok = key is not None and token.mac == self._mac(key, token.digest, token.scheme)
        elif isinstance(token, ThresholdSignatureToken):
            ok = token.mac == self._mac(self._master, token.digest, token.scheme)
        else:
            ok = False
        self._verified[token] = ok
        return ok

    def combine(self, shares: Iterable[SignatureToken], scheme: str) -> ThresholdSignatureToken:
        shares = list(shares)
        digests = {s.digest for s in shares}
        if len(digests) > 1:
            raise DigestMismatch("shares cover different contents")
        signers = {s.signer for s in shares if s.scheme == scheme and self.check(s)}
        if not digests or len(signers) < self.threshold(scheme):
            raise InsufficientShares(f"{len(signers)} valid shares, need {self.threshold(scheme)}")
        d = digests.pop()
        return ThresholdSignatureToken(d, scheme, self._mac(self._master, d, scheme))

    def verify_threshold(self, content: bytes, token, scheme: Optional[str] = None) -> bool:
        if not isinstance(token, ThresholdSignatureToken):
            return False
        if scheme is not None and token.scheme != scheme:
            return False
        return token.digest == digest_of(content) and self.check(token)


def combine(shares, params: SystemParams, scheme: str, keyring: Optional[Keyring] = None):
    """Module-level form of :meth:`Keyring.combine`."""
    if keyring is None:
        keyring = Keyring(params)
    return keyring.combine(shares, scheme)


# -- cost model ---------------------------------------------------------------

TABLE5_NODES = (4, 8, 16, 32, 48)


@dataclass
class CostModel:
    """Byte sizes and virtual CPU times (ms) for crypto work.

    Defaults are the published benchmark numbers for n1-standard-2 nodes.
    """

    sig_size: int = 85
    signed_msg: int = 110
    eddsa_msg: int = 109
    encrypted_msg: int = 70
    pc_share: int = 212
    tc_share: int = 110
    threshold_proof: int = 110

    eddsa_sign: float = 0.28
    eddsa_verify: float = 0.49
    tbls_sign: float = 0.365
    tbls_verify: float = 4.20
    encrypt: float = 0.0007
    decrypt: float = 0.0017
    pc_share_gen: float = 1.40
    pc_share_verify: float = 1.60
    tc_share_gen: float = 0.365
    tc_share_verify: float = 4.20

    pc_combine_small: tuple = (0.71, 1.07, 2.07, 3.84, 5.58)
    pc_combine_large: tuple = (1.06, 1.77, 3.85, 7.34, 11.10)
    pc_coin_gen_small: tuple = (3.90, 6.06, 11.92, 21.74, 31.16)
    pc_coin_gen_large: tuple = (5.93, 9.93, 21.90, 41.01, 61.47)
    tc_combine_small: tuple = (0.21, 0.22, 0.60, 1.03, 1.71)
    tc_combine_large: tuple = (0.22, 0.41, 1.05, 2.28, 3.63)
    tc_coin_gen_small: tuple = (8.64, 12.93, 26.09, 48.38, 69.92)
    tc_coin_gen_large: tuple = (13.36, 21.67, 47.21, 91.18, 134.52)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            vals = v if isinstance(v, (tuple, list)) else (v,)
            if isinstance(v, list):
                setattr(self, f.name, tuple(v))
            if any(x < 0 for x in vals):
                raise ValueError(f"cost {f.name} must be nonnegative")

    @classmethod
    def load(cls, path) -> "CostModel":
        """Read overrides from JSON or from ``key = value`` lines."""
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError:
            raw = {}
            for line in text.splitlines():
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                k, v = (s.strip() for s in line.split("=", 1))
                raw[k] = [float(x) for x in v.split(",")] if "," in v else float(v)
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in raw.items():
            if k not in known:
                raise KeyError(f"unknown cost key {k!r}")
            default = known[k].default
            if isinstance(default, int) and not isinstance(default, bool):
                v = int(v)
            kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CryptoConfig:
    """How consensus messages are protected and which coin family is in use.

    ``signature`` is ``"TBLS"``, ``"EDDSA"`` or ``None`` (unsigned messages
    over encrypted channels).
    """

    signature: Optional[str] = "TBLS"
    coin_family: str = "TC"
    include_proofs: bool = True
    encrypted: bool = False
    costs: CostModel = field(default_factory=CostModel)


def proof_size(p: Optional[ValidityProof], costs: CostModel) -> int:
    if p is None:
        return 0
    if p.form is ProofForm.THRESHOLD_SIG:
        return costs.threshold_proof
    if p.form is ProofForm.SIG_SET:
        return costs.sig_size * len(p.sigs)
    return sum(proof_size(q, costs) for q in p.parts)


def share_size(config: CryptoConfig) -> int:
    return config.costs.pc_share if config.coin_family == "PC" else config.costs.tc_share


def message_size(e: Envelope, config: CryptoConfig) -> int:
    """Wire size in bytes of one point-to-point copy of ``e``."""
    c = config.costs
    if e.kind is Kind.COIN_SHARE:
        return share_size(config)
    if e.kind is Kind.COIN_ECHO:
        return c.encrypted_msg
    if config.signature == "TBLS":
        base = c.signed_msg
    elif config.signature == "EDDSA":
        base = c.eddsa_msg
    else:
        base = c.encrypted_msg
    size = base + proof_size(e.proof, c)
    if e.coin_share is not None:
        size += share_size(config)
    return size


def _table5(costs: CostModel, family: str, what: str, threshold: str, n: int) -> float:
    row = getattr(costs, f"{family.lower()}_{what}_{threshold}")
    xs = np.asarray(TABLE5_NODES, dtype=float)
    ys = np.asarray(row, dtype=float)
    if n > xs[-1]:
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return float(ys[-1] + slope * (n - xs[-1]))
    return float(np.interp(n, xs, ys))


def op_cost(kind: str, config: CryptoConfig, n: int = 4, threshold: str = "large") -> float:
    """Virtual milliseconds for one crypto operation under ``config``.

    ``threshold`` ("small" = t+1, "large" = n-t) and ``n`` only matter for
    ``combine`` and ``coin_gen``, which are interpolated linearly in n.
    """
    c = config.costs
    fam = config.coin_family
    if kind == "sign":
        return c.eddsa_sign if config.signature == "EDDSA" else c.tbls_sign
    if kind == "verify":
        return c.eddsa_verify if config.signature == "EDDSA" else c.tbls_verify
    if kind == "encrypt":
        return c.encrypt
    if kind == "decrypt":
        return c.decrypt
    if kind == "share_gen":
        return c.pc_share_gen if fam == "PC" else c.tc_share_gen
    if kind == "share_verify":
        return c.pc_share_verify if fam == "PC" else c.tc_share_verify
    if kind in ("combine", "coin_gen"):
        return _table5(c, fam, kind, threshold, n)
    raise ValueError(f"unknown crypto operation {kind!r}")


__all__ = [
    "PLAIN", "THRESH_SMALL", "THRESH_LARGE", "InsufficientShares", "DigestMismatch",
    "SignatureToken", "ThresholdSignatureToken", "Keyring", "combine", "CostModel",
    "CryptoConfig", "message_size", "op_cost", "proof_size", "digest_of",
]
