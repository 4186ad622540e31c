"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path as FsPath

from .assign import check_wardrop, solve_cc, solve_ue
from .harness import (
    ConfigError,
    ConvergenceError,
    DataError,
    ExperimentConfig,
    first_passage,
    generate_demands,
    load_instance,
    run_experiment,
    trust_simulation,
    write_outputs,
)
from .net import Commodity, NoPathError, ParseError, load_trips
from .strategies import (
    InstanceTooLarge,
    exact_best_response,
    simulate_response,
    subgroups,
    tasr_multi,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# CLI flag -> config key
FLAG_KEYS = {
    "network": "network_path",
    "trips": "trips_path",
    "delta": "delta",
    "seeds": "seeds",
    "base_seed": "base_seed",
    "interactions": "interactions",
    "epsilon": "epsilon",
    "response": "response_mode",
    "regret": "regret_mode",
    "prior": "prior",
    "k_paths": "k_paths",
    "timing": "timing",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config; flags override its keys")
    p.add_argument("--network", help="TNTP link file")
    p.add_argument("--trips", help="TNTP trips file (commodities default to its OD pairs)")
    p.add_argument("--commodity", nargs=2, type=int, action="append", metavar=("O", "D"),
                   help="OD pair; repeat for several")
    p.add_argument("--strategy", action="append", help="strategy name; repeat or comma-separate")
    p.add_argument("--delta", type=float, help="demand per network edge")
    p.add_argument("--seeds", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--interactions", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--response", choices=["bernoulli", "expected"])
    p.add_argument("--regret", choices=["realized", "counterfactual"])
    p.add_argument("--prior", choices=["free-flow", "ue"])
    p.add_argument("--k-paths", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--timing", action="store_true", default=None,
                   help="fill the runtime_s CSV column (breaks byte-identical reruns)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trustroute", description="Trust-aware Stackelberg routing laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve-cc", "system optimum (complete compliance)"),
        ("solve-ue", "user equilibrium"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--demand", type=float, help="demand for each --commodity pair (default: delta x edges)")
    for name, text in (
        ("run", "strategy sweep over seeds"),
        ("trust-sim", "repeated-interaction trust trajectories"),
        ("oracle-check", "compare TASR with the exhaustive best response"),
    ):
        _common(sub.add_parser(name, help=text))
    return ap


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    updates = {}
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            updates[key] = val
    if args.commodity:
        updates["commodities"] = [list(c) for c in args.commodity]
    if args.strategy:
        names = [s.strip() for chunk in args.strategy for s in chunk.split(",") if s.strip()]
        updates["strategies"] = tuple(names)
    try:
        cfg = replace(cfg, **updates)
        if cfg.commodities is None and cfg.trips_path:
            cfg.commodities = "from-trips"
        cfg.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _config_sets(args, key: str) -> bool:
    if not args.config:
        return False
    with open(args.config, encoding="utf-8") as fh:
        return key in json.load(fh)


def _out_dir(args, cfg) -> FsPath | None:
    return FsPath(args.out_dir) if args.out_dir else None


def cmd_solve(args, kind: str) -> int:
    cfg = config_from_args(args)
    instance = load_instance(cfg)
    network = instance.network
    if cfg.commodities == "from-trips" and args.demand is None:
        demands = {(c.source, c.destination): c.demand for c in load_trips(cfg.trips_path)}
        amounts = [demands[od] for od in instance.od_pairs]
    else:
        each = args.demand if args.demand is not None else cfg.delta * len(network.edges)
        amounts = [each] * len(instance.od_pairs)
    paths = instance.path_set(range(len(instance.od_pairs)))
    comms = [Commodity(o, d, a) for (o, d), a in zip(instance.od_pairs, amounts)]
    solver = solve_cc if kind == "cc" else solve_ue
    res = solver(network, paths, comms, cfg.solver)
    report = {
        "problem": "system-optimum" if kind == "cc" else "user-equilibrium",
        "objective_congestion": res.objective,
        "relative_gap": res.relative_gap,
        "iterations": res.iterations,
        "converged": res.converged,
        "solver": {
            "max_iterations": cfg.max_iterations,
            "relative_gap_target": cfg.relative_gap_target,
            "line_search_tolerance": cfg.line_search_tolerance,
        },
    }
    if kind == "ue":
        report["wardrop_ok"] = check_wardrop(res, max(cfg.relative_gap_target, 1e-4))
    print(json.dumps(report, indent=2))
    out = _out_dir(args, cfg)
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{kind}_flows.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["origin", "destination", "path_edges", "flow"])
            for p, v in zip(res.flows.paths, res.flows.path_array):
                o, d = instance.od_pairs[p.commodity]
                w.writerow([o, d, " ".join(map(str, p.edges)), format(float(v), ".6g")])
        with open(out / f"{kind}_summary.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    result = run_experiment(cfg)
    out = _out_dir(args, cfg)
    if out:
        files = write_outputs(result, str(out), cfg.timing)
        print("wrote " + ", ".join(files.values()))
    print(f"{'strategy':<8} {'per-unit':>10} {'sd':>8} {'ratio':>10} {'n':>5}")
    for name, entry in result.summary["strategies"].items():
        pu = entry["per_unit_travel_time"]
        print(f"{name:<8} {pu['mean']:>10.4f} {pu['sd']:>8.4f} {entry['efficiency_ratio']['mean']:>10.6f} {entry['n']:>5}")
    return EXIT_OK if result.converged else EXIT_NUMERIC


def cmd_trust(args) -> int:
    cfg = config_from_args(args)
    if args.interactions is None and not _config_sets(args, "interactions"):
        cfg = replace(cfg, interactions=50)
    rows = []
    report = {}
    for name in cfg.strategies:
        if name.upper() == "CC":
            continue
        _, mean = trust_simulation(cfg, name)
        report[name] = {
            "first_passage_to_1": first_passage(mean),
            "final_mean_trust": float(mean[-1]),
        }
        rows += [(name, i + 1, float(v)) for i, v in enumerate(mean)]
    print(json.dumps(report, indent=2))
    out = _out_dir(args, cfg)
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trust_mean.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["strategy", "interaction", "mean_trust"])
            for name, it, v in rows:
                w.writerow([name, it, format(v, ".6g")])
        with open(out / "trust_summary.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = config_from_args(args)
    instance = load_instance(cfg)
    paths, groups, _ = generate_demands(cfg, instance, 0)
    profile = tasr_multi(instance.network, paths, groups, cfg.solver)
    tasr = simulate_response(profile, groups, "expected").congestion
    pieces = subgroups(profile, groups)
    try:
        best = exact_best_response(instance.network, paths, pieces)
    except InstanceTooLarge as exc:
        print(f"oracle-check: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    oracle = simulate_response(best, pieces, "expected").congestion
    gap = (tasr - oracle) / oracle
    print(json.dumps({"tasr_expected": tasr, "oracle_expected": oracle, "relative_gap": gap,
                      "groups": len(pieces)}, indent=2))
    return EXIT_OK if oracle <= tasr * (1 + 1e-9) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "solve-cc": lambda a: cmd_solve(a, "cc"),
        "solve-ue": lambda a: cmd_solve(a, "ue"),
        "run": cmd_run,
        "trust-sim": cmd_trust,
        "oracle-check": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ParseError, NoPathError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
