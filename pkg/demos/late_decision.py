"""A schedule where node 1 learns, after moving on, that an earlier round already decided.

The straggler check looks back at rounds it has left behind; when a late quorum
for one of them shows up it decides that round's value.
"""
from bbcsim.netsim import LatencyKind, LatencyModel, Policy, Scheduler, World, WorldConfig
from bbcsim.protocols import ProtocolConfig

seed = 10
w = WorldConfig(ProtocolConfig.default("S1", 4, coin_seed=seed),
                LatencyModel(LatencyKind.UNIFORM, lo=1, hi=10, seed=seed),
                Scheduler(Policy.RANDOM, seed=seed, jitter=20))
world = World(w, instance=seed)
res = world.run([1, 1, 0, 0])
for node in world.nodes:
    v, r = res.decisions[node.pid]
    print(f"node {node.pid}: decided {v} for round {r}  late={node.protocol.late_decision}")
