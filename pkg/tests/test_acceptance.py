"""Acceptance gate.  Each test prints one ``criterion N: PASS|FAIL`` line."""
import itertools

import numpy as np
import pytest

from bbcsim.coins import CoinConfig, CoinEngine, CoinScheme, coin_value
from bbcsim.core import Envelope, Kind, ProofForm, ValidityProof, thresholds
from bbcsim.harness import ExperimentConfig, InvariantViolation, emit, gen_proposals, run_experiment
from bbcsim.netsim import (ByzantineBehavior, DelayRule, LatencyKind, LatencyModel, Policy, Scheduler,
                           World, WorldConfig, write_trace)
from bbcsim.primitives import THRESH_LARGE, CryptoConfig, Keyring, message_size
from bbcsim.protocols import ProtocolConfig

ALGS = ["S1", "S2", "S3", "NS1", "NS2", "NS3"]
BEHAVIORS = ["N", "B", "F", "H", "HF", "M"]


@pytest.fixture
def report(capsys):
    def emit_line(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit_line


def agreement_validity(res, props):
    vals = {v for v, _ in res.decisions.values()}
    honest = {int(props[p]) for p in res.decisions}
    agree = len(vals) == 1
    valid = not (len(honest) == 1 and vals != honest)
    return agree, valid


# 1 --------------------------------------------------------------------------------

def test_criterion_1_safety_grid(report):
    failures = []
    runs = 0
    for alg, beh, p, n in itertools.product(ALGS, BEHAVIORS, (1 / 3, 1 / 2, 2 / 3), (4, 7, 16)):
        proto = ProtocolConfig.default(alg, n)
        w = WorldConfig(proto, LatencyModel(LatencyKind.UNIFORM, lo=1, hi=10, seed=n),
                        Scheduler(Policy.RANDOM, seed=7, jitter=5), faults=proto.params.t, behavior=beh)
        cfg = ExperimentConfig(w, p, instances=100, warmup=0, proposal_seed=1)
        try:
            rep = run_experiment(cfg)
            runs += 100
            if rep.summary()["round_max"] > 50:
                failures.append((alg, beh, p, n, "round cap"))
        except InvariantViolation as exc:
            failures.append((alg, beh, p, n, str(exc)))
    ok = not failures and runs == 6 * 6 * 3 * 3 * 100
    report(1, ok, f"{runs} instances, {len(failures)} failing configs {failures[:3]}")
    assert ok


# 2, 3 --------------------------------------------------------------------------------

def unanimous(alg, value):
    proto = ProtocolConfig.default(alg, 4, presets=True)
    w = WorldConfig(proto, LatencyModel(constant=10), Scheduler(Policy.FIFO))
    return World(w).run([value] * 4)


def test_criterion_2_fastest_decision(report):
    want = {"S1": 2, "S3": 2, "NS1": 2, "NS3": 2, "S2": 3, "NS2": 5}
    got = {}
    for alg in ALGS:
        res = unanimous(alg, 1)
        got[alg] = ({m.broadcasts_at_decision for p, m in res.metrics.items()},
                    {r for _, r in res.decisions.values()})
    ok = all(got[a] == ({want[a]}, {1}) for a in ALGS)
    report(2, ok, " ".join(f"{a}={sorted(got[a][0])}@r{sorted(got[a][1])}" for a in ALGS))
    assert ok


def test_criterion_3_unanimous_zero(report):
    want = {"S1": 2, "S3": 2, "NS1": 2, "NS3": 2, "S2": 1, "NS2": 1}
    got = {}
    for alg in ALGS:
        res = unanimous(alg, 0)
        got[alg] = {(v, r) for v, r in res.decisions.values()}
    ok = all(got[a] == {(0, want[a])} for a in ALGS)
    report(3, ok, " ".join(f"{a}={sorted(got[a])}" for a in ALGS))
    assert ok


# 4 ---------------------------------------------------------------------------------

def test_criterion_4_s1_tail(report):
    proto = ProtocolConfig.default("S1", 4, presets=False)
    w = WorldConfig(proto, LatencyModel.parse("region:single"), Scheduler.parse("random:0:0.05"))
    s = run_experiment(ExperimentConfig(w, 1 / 2, instances=110, warmup=10)).summary()
    ok = s["round_max"] >= 3 and 1.5 <= s["rounds"] <= 3.0
    report(4, ok, f"avg round {s['rounds']}, max round {s['round_max']}")
    assert ok


# 5 ---------------------------------------------------------------------------------

def test_criterion_5_bytes(report):
    p = thresholds(4)
    ring = Keyring(p)
    content = b"0|1|0|1"
    tsig = ring.combine([ring.sign(i, content, THRESH_LARGE) for i in range(3)], THRESH_LARGE)
    sigs = tuple(ring.sign(i, content) for i in range(3))
    got = (
        message_size(Envelope(0, 0, 2, Kind.AUXM, 1,
                              ValidityProof(ProofForm.THRESHOLD_SIG, (tsig,), 1, 1, Kind.AUXM)),
                     CryptoConfig("TBLS")),
        message_size(Envelope(0, 0, 1, Kind.S_VAL, 1), CryptoConfig(None, encrypted=True)),
        message_size(Envelope(0, 0, 1, Kind.COIN_SHARE), CryptoConfig("EDDSA", "PC")),
        message_size(Envelope(0, 0, 1, Kind.COIN_SHARE), CryptoConfig("TBLS", "TC")),
        message_size(Envelope(0, 0, 1, Kind.PRE_VOTE, 1,
                              ValidityProof(ProofForm.SIG_SET, sigs, 0, 1, Kind.PRE_VOTE)),
                     CryptoConfig("EDDSA", "PC")),
    )
    ok = got == (220, 70, 212, 110, 364)
    report(5, ok, f"sizes {got}")
    assert ok


# 6 ---------------------------------------------------------------------------------

def _coin_agreement(pairs):
    p = thresholds(4)
    ring = Keyring(p)
    rng = np.random.default_rng(6)
    bad = 0
    for inst, rnd in pairs:
        cfg = CoinConfig(CoinScheme.TC, "large", seed=42)
        es = [CoinEngine(i, inst, p, cfg, ring) for i in range(4)]
        shares = [e.make_share(rnd) for e in es]
        seen = set()
        for e in es:
            for k in rng.permutation(4):
                v = e.on_share(shares[k])
                if v is not None:
                    seen.add(v)
        bad += len(seen) != 1 or seen != {coin_value(42, inst, rnd)}
    return bad


def _echo_audit(schedules):
    early = 0
    reveals = 0
    for s in range(schedules):
        alg = ("S1", "S2", "NS1", "NS2")[s % 4]
        scheme = "TCE" if s % 2 else "PCE"
        proto = ProtocolConfig.default(alg, 4 if s % 3 else 7, coin_scheme=scheme, coin_seed=s)
        w = WorldConfig(proto, LatencyModel(LatencyKind.UNIFORM, lo=0.5, hi=12, seed=s),
                        Scheduler(Policy.RANDOM, seed=s, jitter=15))
        n, large = proto.params.n, proto.params.quorum_large
        world = World(w, instance=s)
        props = gen_proposals(s, n, 0.5, 1)[0]
        world.run(props)
        points = {}
        for what, pid, rnd, t in world.coin_log:
            if what == "point":
                points.setdefault(rnd, {}).setdefault(pid, t)
        for what, pid, rnd, t in world.coin_log:
            if what == "reveal":
                reveals += 1
                reached = sum(1 for tp in points.get(rnd, {}).values() if tp <= t)
                early += reached < large
    return early, reveals


def _preset_traffic():
    sent = 0
    for alg in ALGS:
        for props in ([1] * 4, [0] * 4, [1, 0, 1, 0]):
            proto = ProtocolConfig.default(alg, 4, presets=True)
            world = World(WorldConfig(proto, LatencyModel(constant=3), Scheduler()))
            world.run(props)
            for node in world.nodes:
                sent += sum(1 for r in node.coin.requested if r <= 2)
                sent += sum(1 for r in node.coin.states if r <= 2 and node.coin.states[r].shares)
    return sent


def test_criterion_6_coins(report):
    pairs = [(i, r) for i in range(1000) for r in range(1, 11)]
    disagree = _coin_agreement(pairs)
    flips = [coin_value(0xC0FFEE, i, r) for i in range(1000) for r in range(1, 11)]
    frac = float(np.mean(flips))
    preset_msgs = _preset_traffic()
    early, reveals = _echo_audit(1000)
    ok = disagree == 0 and abs(frac - 0.5) <= 0.02 and preset_msgs == 0 and early == 0 and reveals > 0
    report(6, ok, f"(a) {disagree} disagreements/{len(pairs)}  (b) ones={frac:.4f}  "
                  f"(c) preset coin msgs={preset_msgs}  (d) early reveals {early}/{reveals}")
    assert ok


# 7 ---------------------------------------------------------------------------------

def test_criterion_7_determinism(report, tmp_path):
    def once(tag):
        proto = ProtocolConfig.default("S3", 7, coin_seed=3)
        w = WorldConfig(proto, LatencyModel.parse("region:us4"), Scheduler.parse("random:5:2"),
                        faults=2, behavior="HF", cpu_model=True)
        rep = run_experiment(ExperimentConfig(w, 1 / 3, instances=15, warmup=3),
                             trace_path=tmp_path / f"{tag}.ndjson")
        return (emit([rep], "csv"), emit([rep], "json"), (tmp_path / f"{tag}.ndjson").read_bytes())
    a, b = once("a"), once("b")
    ok = a == b
    report(7, ok, f"csv/json/trace identical ({len(a[2])} trace bytes)")
    assert ok


# 8 ---------------------------------------------------------------------------------

PINNED_LATE = ("S1", 10, [1, 1, 0, 0], 1)


def _adversary_rules(seed, faulty):
    rng = np.random.default_rng(seed)
    kinds = ["AUXM", "PRE_VOTE", "MAIN_VOTE", "S_VAL", "AUX_STAGE1", "AUX_STAGE2", "S_VAL_S2",
             "COIN_SHARE", "PROOF_OF_DECISION"]
    rules = [DelayRule(40.0, receivers=frozenset({int(rng.integers(0, 4))}),
                       rounds=frozenset({1, 2})),
             DelayRule(25.0, kinds=frozenset(rng.choice(kinds, 3, replace=False).tolist())),
             DelayRule(60.0, senders=frozenset({faulty, int(rng.integers(0, 4))}))]
    return tuple(rules[: 1 + seed % 3])


def test_criterion_8_small_model(report):
    violations = []
    late = {a: 0 for a in ALGS}
    runs = 0
    for alg in ALGS:
        for seed in range(10_000):
            beh = BEHAVIORS[seed % 6]
            proto = ProtocolConfig.default(alg, 4, coin_seed=seed, presets=bool(seed % 5 == 0))
            if seed % 4 == 3:
                sched = Scheduler(Policy.ADVERSARY, rules=_adversary_rules(seed, 0), bound=200)
            else:
                sched = Scheduler(Policy.RANDOM, seed=seed, jitter=20)
            w = WorldConfig(proto, LatencyModel(LatencyKind.UNIFORM, lo=1, hi=10, seed=seed), sched,
                            faults=1, behavior=beh)
            world = World(w, instance=seed)
            props = [int(x) for x in np.random.default_rng([8, seed]).integers(0, 2, 4)]
            res = world.run(props)
            runs += 1
            agree, valid = agreement_validity(res, props)
            if res.liveness_failure or not agree or not valid:
                violations.append((alg, seed, beh, res.liveness_failure))
            late[alg] += any(nd.protocol.late_decision for nd in world.nodes if not nd.faulty)
    alg, seed, props, pid = PINNED_LATE
    proto = ProtocolConfig.default(alg, 4, coin_seed=seed)
    world = World(WorldConfig(proto, LatencyModel(LatencyKind.UNIFORM, lo=1, hi=10, seed=seed),
                              Scheduler(Policy.RANDOM, seed=seed, jitter=20)), instance=seed)
    world.run(props)
    pinned = world.nodes[pid].protocol.late_decision
    ok = not violations and pinned and sum(late.values()) > 0
    report(8, ok, f"{runs} schedules, {len(violations)} violations {violations[:3]}, "
                  f"late decisions {late}, pinned={pinned}")
    assert ok


# 9 ---------------------------------------------------------------------------------

def _mean_time(alg, coin="TC"):
    proto = ProtocolConfig.default(alg, 4, coin_scheme=coin)
    w = WorldConfig(proto, LatencyModel.parse("region:single"), Scheduler.parse("random:0:0.05"),
                    cpu_model=True)
    return run_experiment(ExperimentConfig(w, 1 / 2)).summary()["time_vms"]


def test_criterion_9_cost_ordering(report):
    ns2, s2 = _mean_time("NS2"), _mean_time("S2")
    s1_tc, s1_pc = _mean_time("S1", "TC"), _mean_time("S1", "PC")
    ok = ns2 <= 0.1 * s2 and s1_pc < s1_tc
    report(9, ok, f"NS2 {ns2:.2f} vs S2 {s2:.2f} virtual ms; S1 PC {s1_pc:.2f} vs TC {s1_tc:.2f}")
    assert ok


# 10 --------------------------------------------------------------------------------

def test_criterion_10_combine_coin(report):
    per_round = {False: [], True: []}
    props = gen_proposals(0, 4, 0.5, 100)
    for combine in (False, True):
        proto = ProtocolConfig.default("S1", 4, presets=False, combine_coin=combine)
        w = WorldConfig(proto, LatencyModel(constant=10), Scheduler())
        for i in range(100):
            res = World(w, instance=i).run(props[i])
            for m in res.metrics.values():
                # rounds after the first that the node completed before deciding
                for r in range(2, m.decision_round):
                    per_round[combine].append(m.steps_by_round[r])
    off, on = set(per_round[False]), set(per_round[True])
    ok = off == {2} and on == {1} and len(per_round[True]) > 0
    report(10, ok, f"steps per round after round 1: off {sorted(off)} on {sorted(on)} "
                   f"({len(per_round[False])}/{len(per_round[True])} node-rounds)")
    assert ok
