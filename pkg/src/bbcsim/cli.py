"""Command line front end.

    bbcsim --algorithm NS2 --n 4 --p-one 1/2 --out results/
    bbcsim --grid grids/fig1.json --format json --out results/

A grid file is JSON of the form
``{"base": {<setting>: value, ...}, "sweep": {<setting>: [values, ...], ...}}``
where settings use the long flag names with underscores (``p_one``,
``coin_threshold``, ...).  Every combination of the swept values is run.
"""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .core import ConfigError
from .harness import ExperimentConfig, InvariantViolation, emit, emit_instances, run_experiment
from .netsim import LatencyModel, Scheduler, WorldConfig
from .primitives import CostModel
from .protocols import ProtocolConfig

DEFAULTS = {
    "algorithm": "S1",
    "coin": "TC",
    "coin_threshold": None,
    "presets": "off",
    "combine_coin": "off",
    "include_proofs": "on",
    "n": 4,
    "p_one": "1/2",
    "faults": "0",
    "latency_model": "region:single",
    "scheduler": "random:0:0.05",
    "seed_proposals": 0,
    "seed_coin": 0,
    "instances": 110,
    "warmup": 10,
    "cpu_model": "on",
    "costs": None,
}


def on_off(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).lower()
    if s in ("on", "yes", "true", "1"):
        return True
    if s in ("off", "no", "false", "0"):
        return False
    raise ConfigError(f"expected on/off, got {v!r}")


def parse_faults(text, t: int) -> tuple[int, str]:
    """``0``, ``1:F``, ``t:HF`` -> (count, behavior)."""
    text = str(text)
    count, _, beh = text.partition(":")
    k = t if count.lower() == "t" else int(count)
    return k, (beh.upper() or ("N" if k == 0 else "M"))


def build(settings: dict) -> ExperimentConfig:
    s = {**DEFAULTS, **{k: v for k, v in settings.items() if v is not None}}
    n = int(s["n"])
    proto = ProtocolConfig.default(
        s["algorithm"], n, coin_scheme=str(s["coin"]).upper(), coin_threshold=s["coin_threshold"],
        presets=on_off(s["presets"]), coin_seed=int(s["seed_coin"]),
        include_proofs=on_off(s["include_proofs"]), combine_coin=on_off(s["combine_coin"]))
    faults, behavior = parse_faults(s["faults"], proto.params.t)
    costs = CostModel.load(s["costs"]) if s["costs"] else CostModel()
    world = WorldConfig(proto, LatencyModel.parse(str(s["latency_model"])),
                        Scheduler.parse(str(s["scheduler"])), faults, behavior,
                        on_off(s["cpu_model"]), costs)
    return ExperimentConfig(world, float(Fraction(str(s["p_one"]))), int(s["instances"]),
                            int(s["warmup"]), int(s["seed_proposals"]))


def expand_grid(grid: dict, overrides: dict) -> list[dict]:
    base = {**grid.get("base", {}), **overrides}
    sweep = grid.get("sweep", {})
    keys = list(sweep)
    combos = itertools.product(*(sweep[k] for k in keys)) if keys else [()]
    return [{**base, **dict(zip(keys, c))} for c in combos]


def _run(settings):
    return run_experiment(build(settings))


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbcsim", description=__doc__.split("\n\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--algorithm", choices=["S1", "S2", "S3", "NS1", "NS2", "NS3"], type=str.upper)
    ap.add_argument("--coin", choices=["TC", "TCE", "PC", "PCE"], type=str.upper)
    ap.add_argument("--coin-threshold", choices=["small", "large"])
    ap.add_argument("--presets", metavar="on|off")
    ap.add_argument("--combine-coin", metavar="on|off")
    ap.add_argument("--include-proofs", metavar="on|off")
    ap.add_argument("--n", type=int)
    ap.add_argument("--p-one", help="probability of proposing 1, e.g. 1/3")
    ap.add_argument("--faults", help="count:behavior, e.g. 1:F or t:HF (B F H HF M N)")
    ap.add_argument("--latency-model",
                    help="constant:<ms> | uniform:<lo>:<hi> | region:single|us4|global8 | matrix:<file>")
    ap.add_argument("--scheduler", help="fifo | random:<seed>[:<jitter ms>] | adversary:<rules.json>")
    ap.add_argument("--seed-proposals", type=int)
    ap.add_argument("--seed-coin", type=int)
    ap.add_argument("--instances", type=int)
    ap.add_argument("--warmup", type=int)
    ap.add_argument("--cpu-model", metavar="on|off")
    ap.add_argument("--costs", help="cost-model override file (JSON or key = value lines)")
    ap.add_argument("--grid", help="JSON sweep file")
    ap.add_argument("--world", help="world config JSON; runs its instances with the other settings")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--format", choices=["csv", "json"], default="csv")
    ap.add_argument("--per-instance", action="store_true", help="also write per-instance tables")
    ap.add_argument("--trace", help="write an NDJSON transition trace (single configuration only)")
    ap.add_argument("--coin-trace", action="store_true", help="write per-instance coin values")
    ap.add_argument("--jobs", type=int, default=1, help="configurations run in parallel")
    return ap


SETTING_KEYS = [k for k in DEFAULTS]


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in SETTING_KEYS if getattr(args, k, None) is not None}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.grid:
            runs = expand_grid(json.loads(Path(args.grid).read_text()), overrides)
        else:
            runs = [overrides]
        if args.world:
            w = WorldConfig.load(args.world)
            cfgs = [ExperimentConfig(w, float(Fraction(str(s.get("p_one", DEFAULTS["p_one"])))),
                                     int(s.get("instances", DEFAULTS["instances"])),
                                     int(s.get("warmup", DEFAULTS["warmup"])),
                                     int(s.get("seed_proposals", 0))) for s in runs]
        else:
            cfgs = [build(s) for s in runs]
        if args.trace:
            if len(cfgs) != 1:
                raise ConfigError("--trace needs a single configuration")
            reports = [run_experiment(cfgs[0], trace_path=args.trace)]
        elif args.jobs > 1 and len(cfgs) > 1 and not args.world:
            with ProcessPoolExecutor(args.jobs) as pool:
                reports = list(pool.map(_run, runs))
        else:
            reports = [run_experiment(c) for c in cfgs]
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        for rec in exc.trace[-20:]:
            print(json.dumps(rec), file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    path = out / f"results.{args.format}"
    emit(reports, args.format, path)
    if args.per_instance:
        for k, rep in enumerate(reports):
            emit_instances(rep, out / f"instances_{k}.csv")
    if args.coin_trace:
        coins = [{str(i): {str(r): v for r, v in c.items()} for i, c in rep.coins.items()}
                 for rep in reports]
        (out / "coins.json").write_text(json.dumps(coins, sort_keys=True) + "\n")
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
