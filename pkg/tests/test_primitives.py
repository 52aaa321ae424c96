import itertools

import pytest
from hypothesis import given, strategies as st

from bbcsim.core import Envelope, Kind, ProofForm, ValidityProof, thresholds
from bbcsim.primitives import (PLAIN, THRESH_LARGE, THRESH_SMALL, CostModel, CryptoConfig,
                               DigestMismatch, InsufficientShares, Keyring, SignatureToken,
                               ThresholdSignatureToken, combine, message_size, op_cost)

M = b"0|1|0|1"


def test_sign_verify_roundtrip(ring4):
    tok = ring4.sign(1, M, PLAIN)
    assert ring4.verify(1, M, tok)
    assert not ring4.verify(2, M, tok)
    assert not ring4.verify(1, b"0|1|0|0", tok)
    assert tok == ring4.sign(1, M, PLAIN)


def test_unknown_signer(ring4):
    with pytest.raises(KeyError):
        ring4.sign(9, M)


def test_combine_threshold(p4, ring4):
    shares = [ring4.sign(i, M, THRESH_LARGE) for i in range(4)]
    tok = combine(shares[:3], p4, THRESH_LARGE, ring4)
    assert ring4.verify_threshold(M, tok, THRESH_LARGE)
    with pytest.raises(InsufficientShares):
        combine(shares[:2], p4, THRESH_LARGE, ring4)
    # duplicates do not count twice
    with pytest.raises(InsufficientShares):
        combine([shares[0], shares[0], shares[1]], p4, THRESH_LARGE, ring4)
    with pytest.raises(DigestMismatch):
        combine(shares[:2] + [ring4.sign(3, b"other", THRESH_LARGE)], p4, THRESH_LARGE, ring4)


def test_combine_unique_over_all_subsets(p4, ring4):
    shares = [ring4.sign(i, M, THRESH_LARGE) for i in range(4)]
    toks = {ring4.combine(sub, THRESH_LARGE) for sub in itertools.combinations(shares, 3)}
    assert len(toks) == 1


def test_small_threshold(ring4):
    shares = [ring4.sign(i, M, THRESH_SMALL) for i in (0, 3)]
    assert ring4.combine(shares, THRESH_SMALL).canonical


@given(st.integers(0, 3), st.binary(min_size=8, max_size=8), st.binary(max_size=16))
def test_forged_tokens_fail(signer, mac, content):
    ring = Keyring(thresholds(4), seed=1)
    fake = SignatureToken(signer, ring.sign(signer, content).digest, PLAIN, mac)
    assert ring.verify(signer, content, fake) == (fake == ring.sign(signer, content))
    fake_t = ThresholdSignatureToken(fake.digest, THRESH_LARGE, mac)
    assert not ring.verify_threshold(content, fake_t) or mac == ring.combine(
        [ring.sign(i, content, THRESH_LARGE) for i in range(3)], THRESH_LARGE).mac


def test_keys_depend_on_seed(p4):
    assert Keyring(p4, 1).sign(0, M) != Keyring(p4, 2).sign(0, M)
    assert not Keyring(p4, 2).check(Keyring(p4, 1).sign(0, M))


# -- sizes -------------------------------------------------------------------

def _tsig(ring):
    return ring.combine([ring.sign(i, M, THRESH_LARGE) for i in range(3)], THRESH_LARGE)


def test_size_signed_with_threshold_proof(ring4):
    proof = ValidityProof(ProofForm.THRESHOLD_SIG, (_tsig(ring4),), 1, 1, Kind.AUXM)
    e = Envelope(0, 0, 2, Kind.AUXM, 1, proof)
    assert message_size(e, CryptoConfig("TBLS")) == 220


def test_size_encrypted_sval():
    e = Envelope(0, 0, 1, Kind.S_VAL, 0)
    assert message_size(e, CryptoConfig(None, encrypted=True)) == 70


def test_size_shares_and_echo():
    share = Envelope(0, 0, 1, Kind.COIN_SHARE)
    assert message_size(share, CryptoConfig("EDDSA", "PC")) == 212
    assert message_size(share, CryptoConfig("TBLS", "TC")) == 110
    assert message_size(Envelope(0, 0, 1, Kind.COIN_ECHO), CryptoConfig("TBLS")) == 70


def test_size_eddsa_sig_set(ring4):
    sigs = tuple(ring4.sign(i, M) for i in range(3))
    e = Envelope(0, 0, 1, Kind.PRE_VOTE, 1, ValidityProof(ProofForm.SIG_SET, sigs, 0, 1, Kind.PRE_VOTE))
    assert message_size(e, CryptoConfig("EDDSA", "PC")) == 364


def test_size_dual_and_merged(ring4):
    part = ValidityProof(ProofForm.THRESHOLD_SIG, (_tsig(ring4),))
    dual = ValidityProof(ProofForm.DUAL, parts=(part, part))
    cfg = CryptoConfig("TBLS")
    assert message_size(Envelope(0, 0, 1, Kind.MAIN_VOTE, 2, dual), cfg) == 110 + 220
    merged = Envelope(0, 0, 2, Kind.AUXM, 1, coin_share="tok")
    assert message_size(merged, cfg) == 110 + 110


# -- cpu costs -----------------------------------------------------------------

def test_op_cost_table_values():
    assert op_cost("verify", CryptoConfig("TBLS")) == 4.20
    assert op_cost("share_gen", CryptoConfig("EDDSA", "PC")) == 1.40
    assert op_cost("coin_gen", CryptoConfig("TBLS", "TC"), n=16, threshold="large") == 47.21
    assert op_cost("sign", CryptoConfig("EDDSA")) == 0.28


def test_op_cost_interpolation():
    cfg = CryptoConfig("TBLS", "TC")
    # halfway between the 8- and 16-node columns
    assert op_cost("coin_gen", cfg, n=12) == pytest.approx((21.67 + 47.21) / 2)
    assert op_cost("combine", cfg, n=4, threshold="small") == 0.21
    assert op_cost("coin_gen", cfg, n=64) > op_cost("coin_gen", cfg, n=48)
    with pytest.raises(ValueError):
        op_cost("hash", cfg)


def test_cost_model_load(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("# re-benchmarked\ntbls_verify = 3.5\nsig_size=80\n")
    cm = CostModel.load(f)
    assert cm.tbls_verify == 3.5 and cm.sig_size == 80 and cm.eddsa_sign == 0.28
    j = tmp_path / "c.json"
    j.write_text('{"tc_coin_gen_large": [1, 2, 3, 4, 5]}')
    assert CostModel.load(j).tc_coin_gen_large == (1, 2, 3, 4, 5)
    j.write_text('{"bogus": 1}')
    with pytest.raises(KeyError):
        CostModel.load(j)
    with pytest.raises(ValueError):
        CostModel(encrypt=-1)
