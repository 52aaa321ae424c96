"""Coin schemes side by side, plus a look at the coin log of one echo-scheme run."""
from bbcsim.harness import ExperimentConfig, run_experiment
from bbcsim.netsim import LatencyModel, Scheduler, World, WorldConfig
from bbcsim.protocols import ProtocolConfig

net = dict(latency=LatencyModel.parse("region:us4"), scheduler=Scheduler.parse("random:0:1"), cpu_model=True)

for scheme in ("TC", "TCE", "PC", "PCE"):
    w = WorldConfig(ProtocolConfig.default("S1", 4, coin_scheme=scheme), **net)
    s = run_experiment(ExperimentConfig(w, 0.5, instances=40, warmup=5)).summary()
    print(f"S1 with {scheme:<4} {s['time_vms']:8.2f} virtual ms  {s['kb_per_node']:6.3f} KB/node")

world = World(WorldConfig(ProtocolConfig.default("NS1", 4, coin_scheme="TCE"), **net), instance=3)
world.run([0, 1, 1, 0])
print("\ncoin log (event, node, round, time):")
for row in world.coin_log[:16]:
    print("  %-6s %d %d %8.3f" % row)
