"""Command line front end: solve roots, separate points, bound packings,
generate instances, and run the study reports."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .analysis import diversity_study, sensitivity_study
from .coarsen import FileOracle, heuristic_oracle
from .driver import DriverConfig, RootResult, run_root, separate_point
from .errors import CvrpcutError, ValidationError
from .instance import (
    GenerationProfile,
    generate_random,
    parse_cvrplib,
    serialize_cvrplib,
)
from .relaxation import solution_from_json_dict
from .sep_fci import (
    BPP_EXACT_MAX_ITEMS,
    bpp_exact,
    ffd_upper_bound,
    l2_lower_bound,
    split_items,
)


def _default_jobs() -> int:
    return os.cpu_count() or 1


def _read_instance(path: str):
    return parse_cvrplib(Path(path).read_text())


def _dump_json(data, path: str | None) -> str:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    return text


def _render_table(pairs) -> str:
    width = max(len(k) for k, _ in pairs)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in pairs)


def _make_oracle(args):
    if getattr(args, "oracle_file", None):
        return FileOracle(args.oracle_file, fallback=heuristic_oracle())
    return heuristic_oracle()


def _config_from_args(args) -> DriverConfig:
    return DriverConfig(
        strategy=args.strategy,
        policy=args.policy,
        gamma=args.gamma,
        seed=args.seed,
        max_iterations=getattr(args, "max_iter", 0),
        time_limit_s=getattr(args, "time_limit", None),
        fci=args.fci,
        fci_gate=args.fci_gate,
        insert_threshold=args.insert_threshold,
        ub=getattr(args, "ub", None),
        jobs=args.jobs,
        pi_max=args.pi_max,
        tau=args.tau,
    )


def _add_separation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy",
        default="exact",
        choices=("exact", "coarsen", "coarsen+graphchip"),
        help="separation algorithm",
    )
    parser.add_argument(
        "--policy",
        default="greedy",
        choices=("greedy", "pi_greedy", "roulette", "softmax"),
        help="edge selection during coarsening",
    )
    parser.add_argument("--gamma", type=float, default=0.75)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fci", action="store_true", help="also separate framed cuts")
    parser.add_argument("--fci-gate", type=float, default=1.0)
    parser.add_argument("--insert-threshold", type=float, default=1e-4)
    parser.add_argument("--pi-max", type=float, default=1e-3)
    parser.add_argument("--tau", type=float, default=0.25)
    parser.add_argument("--jobs", type=int, default=_default_jobs())
    parser.add_argument("--oracle-file", help="stored probability vectors")


def cmd_root_solve(args) -> int:
    inst = _read_instance(args.instance)
    cfg = _config_from_args(args)
    result = run_root(inst, cfg, oracle=_make_oracle(args))
    stem = Path(args.instance).stem
    out_result = args.out_result or f"{stem}.result.json"
    out_cuts = args.out_cuts or f"{stem}.cuts.jsonl"
    _dump_json(result.to_json_dict(), out_result)
    with open(out_cuts, "w") as handle:
        for entry in result.cut_log:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
    print(_render_result(result, out_result, out_cuts))
    return 0


def _render_result(result: RootResult, out_result: str, out_cuts: str) -> str:
    history = " -> ".join(f"{v:.2f}" for v in result.lb_history)
    pairs = [
        ("instance", result.instance),
        ("customers", str(result.n_customers)),
        ("capacity", str(result.capacity)),
        ("fleet bound", str(result.k_fleet)),
        ("status", result.status),
        ("separation rounds", str(result.iterations)),
        ("lower bound", f"{result.lower_bound:.2f}"),
        ("upper bound", f"{result.upper_bound:.2f} ({result.ub_source})"),
        ("gap", f"{result.gap:.2f} %"),
        ("cuts", f"{result.rci_count} rci + {result.fci_count} fci"),
        ("lb history", history),
        ("wall time", f"{result.wall_time_s:.2f} s"),
        ("result json", out_result),
        ("cut log", out_cuts),
    ]
    return _render_table(pairs)


def cmd_separate(args) -> int:
    inst = _read_instance(args.instance)
    data = json.loads(Path(args.solution).read_text())
    frac = solution_from_json_dict(data)
    cfg = _config_from_args(args)
    entries = separate_point(inst, frac, cfg, oracle=_make_oracle(args))
    lines = "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries)
    if args.out:
        Path(args.out).write_text(lines)
        print(f"{len(entries)} cuts -> {args.out}")
    else:
        sys.stdout.write(lines)
    return 0


def _parse_items(spec: str, capacity: int) -> list[int]:
    items: list[int] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token.endswith(":split"):
            demand = int(token[: -len(":split")])
            items.extend(split_items([demand], capacity))
        else:
            weight = int(token)
            if not 1 <= weight <= capacity:
                raise ValidationError(
                    f"item {weight} outside [1, {capacity}]; use :split to break it up"
                )
            items.append(weight)
    if not items:
        raise ValidationError("no items given")
    return items


def cmd_bpp(args) -> int:
    items = _parse_items(args.items, args.cap)
    l2 = l2_lower_bound(items, args.cap)
    ffd = ffd_upper_bound(items, args.cap)
    exact = None
    if len(items) <= BPP_EXACT_MAX_ITEMS:
        exact = bpp_exact(items, args.cap, node_limit=args.node_limit)
    report = {
        "capacity": args.cap,
        "items": sorted(items, reverse=True),
        "l2": l2,
        "ffd": ffd,
        "exact": exact,
    }
    sys.stdout.write(_dump_json(report, args.out))
    return 0


def _study_instances(args):
    if args.instances:
        return [_read_instance(path) for path in args.instances]
    sizes = [int(tok) for tok in args.gen_sizes.split(",") if tok.strip()]
    if not sizes:
        raise ValidationError("no instance files and no --gen-sizes")
    profile = GenerationProfile()
    out = []
    idx = 0
    for size in sizes:
        for _ in range(args.gen_count):
            out.append(generate_random(size, seed=args.seed + idx, profile=profile))
            idx += 1
    return out


def cmd_sensitivity(args) -> int:
    instances = _study_instances(args)
    report = sensitivity_study(instances, eps=args.eps, jobs=args.jobs)
    rows = [("instance", "m", "d1", "d2(m,m+1)", "d3(m,m+1)")]
    for row in report["rows"]:
        rows.append(
            (
                row["instance"],
                str(row["m"]),
                f"{row['d1']:.4f}",
                "-" if row["d2_next"] is None else f"{row['d2_next']:.4f}",
                "-" if row["d3_next"] is None else f"{row['d3_next']:.4f}",
            )
        )
    _print_columns(rows)
    if args.out:
        _dump_json(report, args.out)
        print(f"report -> {args.out}")
    return 0


def cmd_diversity(args) -> int:
    instances = _study_instances(args)
    seeds = [int(tok) for tok in args.seeds.split(",") if tok.strip()]
    policies = [tok.strip() for tok in args.policies.split(",") if tok.strip()]
    report = diversity_study(
        instances,
        policies=policies,
        seeds=seeds,
        gamma=args.gamma,
        pi_max=args.pi_max,
        tau=args.tau,
        jobs=args.jobs,
    )
    rows = [("instance", "policy", "mean jaccard", "pairs")]
    for row in report["rows"]:
        rows.append(
            (
                row["instance"],
                row["policy"],
                f"{row['mean_d3']:.4f}",
                str(row["pairs"]),
            )
        )
    _print_columns(rows)
    if args.out:
        _dump_json(report, args.out)
        print(f"report -> {args.out}")
    return 0


def _print_columns(rows) -> None:
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def cmd_gen(args) -> int:
    profile = GenerationProfile(
        coord_span=args.coord_span,
        demand_low=args.demand_low,
        demand_high=args.demand_high,
        route_size=args.route_size,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        inst = generate_random(args.size, seed=args.seed + k, profile=profile)
        path = out_dir / f"{inst.name}.vrp"
        path.write_text(serialize_cvrplib(inst))
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvrpcut",
        description="Root-node cutting planes for capacitated vehicle routing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_root = sub.add_parser("root-solve", help="run the cutting loop on one instance")
    p_root.add_argument("instance")
    _add_separation_flags(p_root)
    p_root.add_argument("--max-iter", type=int, default=50)
    p_root.add_argument("--time-limit", type=float, default=None)
    p_root.add_argument("--ub", type=float, default=None, help="known upper bound")
    p_root.add_argument("--out-result", help="result JSON path")
    p_root.add_argument("--out-cuts", help="cut log path (JSON lines)")
    p_root.set_defaults(func=cmd_root_solve)

    p_sep = sub.add_parser("separate", help="separate one fractional point")
    p_sep.add_argument("instance")
    p_sep.add_argument("solution", help="fractional solution JSON")
    _add_separation_flags(p_sep)
    p_sep.add_argument("--out", help="cut list path (JSON lines)")
    p_sep.set_defaults(func=cmd_separate)

    p_bpp = sub.add_parser("bpp", help="bin packing bounds for an item list")
    p_bpp.add_argument("--cap", type=int, required=True)
    p_bpp.add_argument(
        "--items",
        required=True,
        help="comma list of weights; suffix :split to break demands over cap",
    )
    p_bpp.add_argument("--node-limit", type=int, default=200_000)
    p_bpp.add_argument("--out", help="bounds JSON path")
    p_bpp.set_defaults(func=cmd_bpp)

    p_sens = sub.add_parser("sensitivity", help="oracle sensitivity report")
    p_sens.add_argument("instances", nargs="*")
    p_sens.add_argument("--gen-sizes", default="", help="comma sizes to generate")
    p_sens.add_argument("--gen-count", type=int, default=1)
    p_sens.add_argument("--seed", type=int, default=0)
    p_sens.add_argument("--eps", type=float, default=1e-3)
    p_sens.add_argument("--jobs", type=int, default=_default_jobs())
    p_sens.add_argument("--out", help="report JSON path")
    p_sens.set_defaults(func=cmd_sensitivity)

    p_div = sub.add_parser("diversity", help="subset diversity across seeds")
    p_div.add_argument("instances", nargs="*")
    p_div.add_argument("--gen-sizes", default="", help="comma sizes to generate")
    p_div.add_argument("--gen-count", type=int, default=1)
    p_div.add_argument("--seed", type=int, default=0)
    p_div.add_argument("--policies", default="greedy,pi_greedy")
    p_div.add_argument("--seeds", default="0,1", help="comma list of run seeds")
    p_div.add_argument("--gamma", type=float, default=0.75)
    p_div.add_argument("--pi-max", type=float, default=1e-3)
    p_div.add_argument("--tau", type=float, default=0.25)
    p_div.add_argument("--jobs", type=int, default=_default_jobs())
    p_div.add_argument("--out", help="report JSON path")
    p_div.set_defaults(func=cmd_diversity)

    p_gen = sub.add_parser("gen", help="write random CVRPLIB instances")
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--size", type=int, required=True, help="customer count")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out-dir", default=".")
    p_gen.add_argument("--coord-span", type=int, default=1000)
    p_gen.add_argument("--demand-low", type=int, default=1)
    p_gen.add_argument("--demand-high", type=int, default=100)
    p_gen.add_argument("--route-size", type=float, default=5.0)
    p_gen.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("CVRPCUT_LOG", "").upper()
    if level:
        logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CvrpcutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
