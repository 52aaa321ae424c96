"""One faulty node out of seven, each behavior, each algorithm.

Agreement and validity are checked per instance by the harness; a violation
raises instead of printing a row.
"""
from bbcsim.harness import ExperimentConfig, run_experiment
from bbcsim.netsim import LatencyKind, LatencyModel, Policy, Scheduler, WorldConfig
from bbcsim.protocols import ProtocolConfig

print(f"{'alg':<5}{'beh':<4}{'rounds':>8}{'max':>5}{'msgs/node':>11}")
for alg in ("S1", "S2", "S3", "NS1", "NS2", "NS3"):
    for beh in ("B", "F", "H", "HF", "M"):
        w = WorldConfig(ProtocolConfig.default(alg, 7), LatencyModel(LatencyKind.UNIFORM, lo=1, hi=10),
                        Scheduler(Policy.RANDOM, seed=1, jitter=5), faults=2, behavior=beh)
        s = run_experiment(ExperimentConfig(w, 0.5, instances=30, warmup=0)).summary()
        print(f"{alg:<5}{beh:<4}{s['rounds']:>8.2f}{s['round_max']:>5}{s['msgs_per_node']:>11.1f}")
