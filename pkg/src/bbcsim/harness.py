"""Experiment runner: sequential seeded instances, invariant checks, reports.

Each configuration runs ``instances`` consensus instances one after another
(each in a fresh simulated network starting at virtual time 0).  The first
``warmup`` are checked but left out of the averages.
"""
from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .netsim import World, WorldConfig, write_trace
from .primitives import Keyring

STANDARD_PROBABILITIES = (1 / 3, 1 / 2, 2 / 3)


class InvariantViolation(AssertionError):
    """Agreement, validity or termination failed; ``trace`` holds the tail of the run."""

    def __init__(self, msg: str, trace: Optional[list] = None):
        super().__init__(msg)
        self.trace = trace or []


def gen_proposals(seed: int, n: int, p_one: float, instances: int = 1) -> np.ndarray:
    """Proposal matrix, shape (instances, n).  Row i depends only on (seed, i)."""
    if not 0 < p_one <= 1:
        raise ValueError("p_one must lie in (0, 1]")
    rows = [np.random.default_rng([seed, i]).random(n) < p_one for i in range(instances)]
    return np.asarray(rows, dtype=np.int8).reshape(instances, n)


@dataclass
class ExperimentConfig:
    world: WorldConfig
    one_probability: float = 1 / 2
    instances: int = 110
    warmup: int = 10
    proposal_seed: int = 0
    retained_instances: int = 10
    strict_probability: bool = False

    def __post_init__(self):
        if not 0 <= self.warmup < self.instances:
            raise ValueError("need 0 <= warmup < instances")
        if self.strict_probability and not any(
                abs(self.one_probability - p) < 1e-9 for p in STANDARD_PROBABILITIES):
            raise ValueError("p_one must be 1/3, 1/2 or 2/3")

    @property
    def coin_seed(self) -> int:
        return self.world.protocol.coin.seed

    def describe(self) -> dict:
        w = self.world.to_dict()
        lat, sch = w.pop("latency"), w.pop("scheduler")
        w["latency"] = lat["kind"].lower() + (":" + lat["region"] if lat["kind"] == "REGION" else "")
        w["scheduler"] = sch["policy"].lower()
        w.update(p_one=round(self.one_probability, 6), instances=self.instances,
                 warmup=self.warmup, proposal_seed=self.proposal_seed)
        return w


@dataclass
class InstanceMetrics:
    instance: int
    node: int
    decision_vtime_ms: float
    messages_sent: int
    bytes_sent: int
    decision_round: int
    round_min: int
    round_max: int


METRICS = ("time_vms", "kb_per_node", "msgs_per_node", "rounds", "round_min", "round_max")


@dataclass
class Report:
    config: dict
    table: list = field(default_factory=list)   # InstanceMetrics of measured instances
    retained: list = field(default_factory=list)
    coins: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return summarize(self.table)

    def row(self) -> dict:
        return {**self.config, **self.summary()}


def summarize(table: list) -> dict:
    if not table:
        return {k: None for k in METRICS}
    t = np.array([m.decision_vtime_ms for m in table], dtype=float)
    return {
        "time_vms": round(float(t.mean()), 6),
        "kb_per_node": round(float(np.mean([m.bytes_sent for m in table])) / 1000, 3),
        "msgs_per_node": round(float(np.mean([m.messages_sent for m in table])), 4),
        "rounds": round(float(np.mean([m.decision_round for m in table])), 4),
        "round_min": min(m.round_min for m in table),
        "round_max": max(m.round_max for m in table),
    }


def check_instance(res, proposals) -> Optional[str]:
    """Return a description of the first violated property, if any."""
    if res.liveness_failure:
        return "termination: " + res.liveness_failure
    decided = {p: v for p, (v, _) in res.decisions.items()}
    values = set(decided.values())
    if len(values) > 1:
        return f"agreement: decisions {decided}"
    honest_props = {int(proposals[p]) for p in res.decisions}
    if len(honest_props) == 1 and values and values != honest_props:
        return f"validity: all non-faulty proposed {honest_props.pop()}, decided {values.pop()}"
    return None


def run_instance(world: WorldConfig, instance: int, proposals, keyring: Optional[Keyring] = None,
                 trace: bool = False):
    return World(world, instance, keyring, trace).run(proposals)


def run_experiment(cfg: ExperimentConfig, trace_path=None) -> Report:
    world = cfg.world
    n = world.n
    props = gen_proposals(cfg.proposal_seed, n, cfg.one_probability, cfg.instances)
    keyring = Keyring(world.protocol.params, world.key_seed)
    report = Report(cfg.describe())
    retained = deque(maxlen=cfg.retained_instances)
    traces = [] if trace_path is not None else None
    for i in range(cfg.instances):
        res = run_instance(world, i, props[i], keyring, trace=traces is not None)
        keyring.memo.clear()
        problem = check_instance(res, props[i])
        if problem:
            tail = res.trace or run_instance(world, i, props[i], trace=True).trace
            raise InvariantViolation(f"instance {i}: {problem}", tail[-60:])
        if traces is not None:
            traces.extend(res.trace)
        retained.append(res)
        report.coins[i] = next(iter(res.coins.values()), {})
        if i < cfg.warmup:
            continue
        rounds = [r for _, r in res.decisions.values()]
        for p, (_, r) in res.decisions.items():
            m = res.metrics[p]
            report.table.append(InstanceMetrics(
                i, p, round(m.decision_time, 6), m.messages_sent, m.bytes_sent, r,
                min(rounds), max(rounds)))
    report.retained = list(retained)
    if trace_path is not None:
        write_trace(traces, trace_path)
    return report


# -- output ------------------------------------------------------------------------

def _rows(reports) -> list[dict]:
    return [r.row() for r in reports]


def emit(reports, fmt: str = "csv", out=None) -> str:
    """Serialize one wide row per configuration; writes to ``out`` if given."""
    rows = _rows(reports)
    if fmt == "json":
        text = json.dumps(rows, indent=2, sort_keys=False) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        cols = list(rows[0]) if rows else []
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out is not None:
        Path(out).write_text(text)
    return text


def emit_instances(report: Report, out) -> None:
    """Per-instance, per-node table of one configuration (CSV)."""
    cols = list(InstanceMetrics.__dataclass_fields__)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for m in report.table:
            w.writerow([getattr(m, c) for c in cols])


__all__ = ["STANDARD_PROBABILITIES", "InvariantViolation", "gen_proposals", "ExperimentConfig",
           "InstanceMetrics", "Report", "summarize", "check_instance", "run_instance",
           "run_experiment", "emit", "emit_instances", "METRICS"]
