"""Merging the coin share into the next round's first message saves one step per round."""
from bbcsim.harness import gen_proposals
from bbcsim.netsim import LatencyModel, Scheduler, World, WorldConfig
from bbcsim.protocols import ProtocolConfig

props = gen_proposals(0, 4, 0.5, 50)
for combine in (False, True):
    w = WorldConfig(ProtocolConfig.default("S1", 4, combine_coin=combine), LatencyModel(constant=10), Scheduler())
    steps, rounds = [], []
    for i, p in enumerate(props):
        res = World(w, instance=i).run(p)
        for m in res.metrics.values():
            rounds.append(m.decision_round)
            steps += [m.steps_by_round[r] for r in range(2, m.decision_round)]
    avg = sum(steps) / len(steps)
    print(f"combine={'on ' if combine else 'off'}  steps per later round {avg:.2f}  "
          f"avg decision round {sum(rounds) / len(rounds):.2f}")
