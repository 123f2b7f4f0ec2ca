"""Command line interface.

    isac-secbf run   --scenario <file> --method <name> [--seed N] [--trace out.csv]
    isac-secbf sweep --spec <file> --out <dir> [--seed N] [--trials N]
    isac-secbf beams --tmax <T> --trials <n> [--profile desk|full]

Sweep spec files are YAML: {param, values, trials, methods, scenario?}; the
scenario defaults to the selected profile when omitted.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import sys

import yaml

from . import bench, fp_digital, had
from .channel import build_channels
from .scenario import load_scenario, make_rng, scenario_from_dict


def profile_config(name: str):
    ref = importlib.resources.files("isac_secbf") / "profiles" / f"{name}.yaml"
    with ref.open("r") as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def _load_base(args):
    if getattr(args, "scenario", None):
        cfg = load_scenario(args.scenario)
    else:
        cfg = profile_config(args.profile)
    if args.seed is not None:
        cfg = cfg.with_updates(seed=int(args.seed))
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_base(args)
    channels = build_channels(cfg, make_rng(cfg.seed, "channels"))
    rec = bench.run_method(args.method, channels, cfg, rng=make_rng(cfg.seed, f"est/{args.method}"))
    print(json.dumps({
        "method": rec.method,
        "status": rec.status,
        "iterations": rec.iterations,
        "secrecy_rate_bits": rec.secrecy_rate,
        "sum_rate_bits": rec.sum_rate,
        "worst_ae_sinr_db": rec.ae_sinr_db,
        "worst_scnr_db": rec.scnr_db,
    }, indent=2))
    if args.trace:
        _write_trace(args, cfg, channels)
    return 0


def _write_trace(args, cfg, channels):
    if args.method == "had":
        sol = had.run_hybrid(channels, cfg)
        cols = had.HybridSolution.trace_columns
        rows = sol.trace
    else:
        sol = fp_digital.run(channels, cfg)
        cols = fp_digital.DigitalSolution.trace_columns
        rows = sol.trace
    with open(args.trace, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row[c] for c in cols])
    print(f"trace written to {args.trace}", file=sys.stderr)


def _cmd_sweep(args) -> int:
    with open(args.spec) as fh:
        raw = yaml.safe_load(fh)
    if "scenario" in raw:
        base = scenario_from_dict(raw["scenario"])
    else:
        base = profile_config(args.profile)
    if args.seed is not None:
        base = base.with_updates(seed=int(args.seed))
    trials = int(args.trials) if args.trials is not None else int(raw.get("trials", 10))
    spec = bench.SweepSpec(
        base=base,
        param=raw["param"],
        values=list(raw["values"]),
        trials=trials,
        methods=tuple(raw.get("methods", bench.METHODS)),
    )
    summary = bench.run_sweep(spec, args.out)
    for key in sorted(summary):
        row = summary[key]
        print(
            f"{key[0]:<16} {key[1]}={key[2]:<8g} n={row['n']:<4d} "
            f"secrecy={row['secrecy_mean']:.4f} +/- {row['secrecy_stderr']:.4f}"
        )
    print(f"results under {args.out}", file=sys.stderr)
    return 0


def _cmd_beams(args) -> int:
    cfg = _load_base(args)
    rows = bench.required_beams_experiment(range(1, args.tmax + 1), args.trials, cfg)
    print(f"{'T':>3} {'worst-case bound':>18} {'empirical max':>14}")
    for row in rows:
        print(f"{row['t_aes']:>3} {row['theoretical']:>18} {row['empirical_max']:>14}")
    bad = [r for r in rows if r["empirical_max"] > r["theoretical"]]
    return 1 if bad else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="isac-secbf", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one method on one scenario")
    p_run.add_argument("--scenario", help="scenario YAML path (default: profile)")
    p_run.add_argument("--method", required=True, choices=bench.METHODS)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--profile", choices=("desk", "full"), default="desk")
    p_run.add_argument("--trace", help="write per-iteration trace CSV here")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo parameter sweep")
    p_sweep.add_argument("--spec", required=True, help="sweep spec YAML")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--trials", type=int)
    p_sweep.add_argument("--profile", choices=("desk", "full"), default="desk")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_beams = sub.add_parser("beams", help="sensing-beam rank bound experiment")
    p_beams.add_argument("--tmax", type=int, required=True)
    p_beams.add_argument("--trials", type=int, required=True)
    p_beams.add_argument("--seed", type=int)
    p_beams.add_argument("--profile", choices=("desk", "full"), default="desk")
    p_beams.set_defaults(func=_cmd_beams)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
