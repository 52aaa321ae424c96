"""Virtual decision time under the CPU cost model: signed versus unsigned, and coin choice."""
from bbcsim.harness import ExperimentConfig, run_experiment
from bbcsim.netsim import LatencyModel, Scheduler, WorldConfig
from bbcsim.protocols import ProtocolConfig

for alg, scheme in (("S1", "TC"), ("S1", "PC"), ("S2", "TC"), ("NS1", "TC"), ("NS2", "TC")):
    for n in (4, 16):
        w = WorldConfig(ProtocolConfig.default(alg, n, coin_scheme=scheme),
                        LatencyModel.parse("region:single"), Scheduler.parse("random:0:0.05"), cpu_model=True)
        s = run_experiment(ExperimentConfig(w, 0.5, instances=30, warmup=5)).summary()
        print(f"{alg:<4}{scheme:<3} n={n:<3}{s['time_vms']:9.2f} virtual ms  {s['kb_per_node']:7.3f} KB/node")
