"""Unanimous inputs with coin presets: how many broadcasts each algorithm needs.

Run: python demos/fast_path.py
"""
from bbcsim.netsim import LatencyModel, Scheduler, World, WorldConfig
from bbcsim.protocols import ProtocolConfig

for value in (1, 0):
    print(f"all four nodes propose {value}")
    for alg in ("S1", "S2", "S3", "NS1", "NS2", "NS3"):
        w = WorldConfig(ProtocolConfig.default(alg, 4, presets=True), LatencyModel(constant=10), Scheduler())
        res = World(w).run([value] * 4)
        m = res.metrics[0]
        v, r = res.decisions[0]
        print(f"  {alg:<4} decides {v} in round {r} after {m.broadcasts_at_decision} broadcasts "
              f"({m.decision_time:.0f} virtual ms)")
