import csv
import io
import json

import numpy as np
import pytest

from bbcsim import cli
from bbcsim.harness import (ExperimentConfig, InvariantViolation, check_instance, emit,
                            gen_proposals, run_experiment, summarize)
from bbcsim.netsim import LatencyModel, Scheduler, WorldConfig
from bbcsim.protocols import ProtocolConfig


def exp(alg="NS2", n=4, p=0.5, instances=30, warmup=5, **kw):
    proto = ProtocolConfig.default(alg, n, **{k: v for k, v in kw.items() if k in ("presets",)})
    w = WorldConfig(proto, LatencyModel(constant=1.0), Scheduler(),
                    **{k: v for k, v in kw.items() if k in ("faults", "behavior", "cpu_model")})
    return ExperimentConfig(w, p, instances, warmup)


def test_proposals_shared_across_configs():
    a = gen_proposals(3, 7, 1 / 3, 50)
    assert a.shape == (50, 7)
    assert (a == gen_proposals(3, 7, 1 / 3, 50)).all()
    # instance rows do not depend on how many instances are generated
    assert (gen_proposals(3, 7, 1 / 3, 10) == a[:10]).all()


def test_proposal_frequency():
    draws = gen_proposals(11, 100, 2 / 3, 100)
    assert abs(draws.mean() - 2 / 3) < 0.02


def test_proposals_degenerate():
    assert gen_proposals(0, 5, 1.0, 4).all()
    with pytest.raises(ValueError):
        gen_proposals(0, 5, 0.0)


def test_warmup_validation():
    with pytest.raises(ValueError):
        exp(instances=10, warmup=10)


def test_ns2_rounds_in_band():
    rep = run_experiment(exp("NS2", instances=110, warmup=10))
    s = rep.summary()
    assert 1 <= s["rounds"] <= 2
    assert len(rep.table) == 100 * 4
    assert len(rep.retained) == 10


def test_s1_has_a_tail():
    rep = run_experiment(exp("S1", instances=110, warmup=10))
    assert rep.summary()["round_max"] >= 3


def test_mute_faults_keep_agreement():
    rep = run_experiment(exp("S2", n=7, faults=2, behavior="M"))
    assert len({m.node for m in rep.table}) == 5


def test_summary_recomputes_from_table():
    rep = run_experiment(exp("S3"))
    s = rep.summary()
    t = rep.table
    assert s["kb_per_node"] == round(float(np.mean([m.bytes_sent for m in t])) / 1000, 3)
    assert s["rounds"] == round(float(np.mean([m.decision_round for m in t])), 4)
    assert summarize(t) == s


def test_check_instance_flags_disagreement():
    class R:
        liveness_failure = None
        decisions = {0: (1, 1), 1: (0, 1)}
    assert check_instance(R, [1, 1]).startswith("agreement")
    R.decisions = {0: (0, 1), 1: (0, 1)}
    assert check_instance(R, [1, 1]).startswith("validity")


def test_violation_aborts(monkeypatch):
    import bbcsim.harness as h
    monkeypatch.setattr(h, "check_instance", lambda res, props: "agreement: forced")
    with pytest.raises(InvariantViolation) as err:
        run_experiment(exp(instances=3, warmup=1))
    assert "instance 0" in str(err.value) and err.value.trace


def test_emit_rows_and_determinism(tmp_path):
    reps = [run_experiment(exp(alg, p=p, instances=12, warmup=2))
            for alg in ("S1", "S2", "NS2") for p in (1 / 3, 1 / 2, 2 / 3)]
    text = emit(reps, "csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 9
    assert float(rows[0]["kb_per_node"]) == reps[0].summary()["kb_per_node"]
    assert emit(reps, "csv") == text
    j = emit(reps, "json", tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text()) == json.loads(j)
    with pytest.raises(ValueError):
        emit(reps, "xml")


def test_kb_unit():
    rep = run_experiment(exp("NS2", instances=3, warmup=1))
    assert rep.summary()["kb_per_node"] == round(np.mean([m.bytes_sent for m in rep.table]) / 1000, 3)


# -- CLI --------------------------------------------------------------------------

def test_cli_single_run(tmp_path):
    rc = cli.main(["--algorithm", "ns1", "--n", "4", "--instances", "6", "--warmup", "1",
                   "--p-one", "2/3", "--faults", "1:F", "--out", str(tmp_path), "--per-instance",
                   "--coin-trace"])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "results.csv")))
    assert rows[0]["algorithm"] == "NS1" and rows[0]["behavior"] == "F"
    assert (tmp_path / "instances_0.csv").exists() and (tmp_path / "coins.json").exists()


def test_cli_grid_and_trace(tmp_path):
    grid = {"base": {"instances": 4, "warmup": 1, "n": 4},
            "sweep": {"algorithm": ["S1", "NS2"], "p_one": ["1/3", "2/3"]}}
    g = tmp_path / "grid.json"
    g.write_text(json.dumps(grid))
    assert cli.main(["--grid", str(g), "--format", "json", "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "results.json").read_text())) == 4
    tr = tmp_path / "t.ndjson"
    assert cli.main(["--instances", "2", "--warmup", "1", "--trace", str(tr),
                     "--out", str(tmp_path)]) == 0
    assert all(json.loads(line)["instance"] in (0, 1) for line in tr.read_text().splitlines())


def test_cli_world_file(tmp_path):
    w = WorldConfig(ProtocolConfig.default("S2", 4), LatencyModel(constant=2), Scheduler())
    f = tmp_path / "w.json"
    f.write_text(json.dumps(w.to_dict()))
    assert cli.main(["--world", str(f), "--instances", "3", "--warmup", "1", "--out", str(tmp_path)]) == 0


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["--n", "3", "--out", str(tmp_path)]) == 1
    assert cli.main(["--faults", "2:M", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
