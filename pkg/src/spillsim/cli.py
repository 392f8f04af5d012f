"""Command-line entry points: validate, run, and sweep scenarios.

Exit status is a pure function of the run outcome: 0 when every spill reached
the stop threshold within the iteration budget, 1 otherwise, 2 for bad input.
"""

from __future__ import annotations

import argparse
import copy
import sys
from importlib import resources
from pathlib import Path

import yaml

from . import engine
from .metrics import FIXED_DECIMALS, metrics_csv_lines, poses_csv_lines
from .scenario import ScenarioError, parse_scenario, scenario_from_dict


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (case1, case2, ...)."""
    return Path(resources.files("spillsim.scenarios") / f"{name}.yaml")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spillsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="parse a scenario and report every violation")
    p_val.add_argument("scenario", help="scenario file path")
    p_val.add_argument("--lenient", action="store_true", help="ignore unknown keys")

    p_run = sub.add_parser("run", help="run one scenario and write its artifacts")
    _common_run_args(p_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    _common_run_args(p_sweep)
    p_sweep.add_argument("--param", required=True, help="dotted config key, e.g. robots.count")
    p_sweep.add_argument("--values", required=True, help="comma-separated values for the key")
    p_sweep.add_argument(
        "--parallel", type=int, default=1, metavar="N",
        help="run up to N sweep points at once (they are independent)",
    )
    return parser


def _common_run_args(parser):
    parser.add_argument("scenario", help="scenario file path")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--k-max", type=int, default=None, help="override the iteration budget")
    parser.add_argument("--poses", action="store_true", help="also dump per-tick poses")
    parser.add_argument("--lenient", action="store_true", help="ignore unknown scenario keys")
    parser.add_argument("--quiet", action="store_true", help="suppress per-spill stdout lines")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            parse_scenario(args.scenario, strict=not args.lenient)
            print(f"{args.scenario}: valid")
            return 0
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return 2


def _load(args):
    config = parse_scenario(args.scenario, strict=not args.lenient)
    if args.k_max is not None:
        config.stop.k_max = args.k_max
    return config


def _cmd_run(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    summary = execute(config, out_dir, seed=args.seed, dump_poses=args.poses)
    if not args.quiet:
        _print_summary(summary)
    return 0 if summary.all_complete else 1


def execute(config, out_dir: Path, seed=None, dump_poses=False):
    """Run one scenario and write metrics.csv, summary.txt, and trees.txt."""
    out_dir.mkdir(parents=True, exist_ok=True)
    state = engine.init(config, seed=seed, record_poses=dump_poses)
    summary = engine.run(state)
    (out_dir / "metrics.csv").write_text("\n".join(metrics_csv_lines(state.records)) + "\n")
    (out_dir / "summary.txt").write_text(summary.format_text())
    (out_dir / "trees.txt").write_text(_trees_text(state))
    if dump_poses:
        (out_dir / "poses.csv").write_text("\n".join(poses_csv_lines(state.pose_rows)) + "\n")
    if state.events:
        (out_dir / "events.txt").write_text(
            "\n".join(f"{k},{message}" for k, message in state.events) + "\n"
        )
    return summary


def _trees_text(state) -> str:
    lines = ["robot_id,parent_id,level"]
    for tree in state.trees:
        for robot_id, parent_id, level in tree.edge_list():
            lines.append(f"{robot_id},{parent_id},{level}")
    return "\n".join(lines) + "\n"


def _print_summary(summary):
    for row in summary.spill_rows:
        k_stop = row["k_stop"] if row["k_stop"] is not None else "-"
        print(
            f"spill {row['spill_id']}: k_stop={k_stop} "
            f"completeness={row['completeness']:.2f}% "
            f"residual={row['residual_area']:.{FIXED_DECIMALS}f} m^2"
        )
    print(f"all complete: {summary.all_complete} after {summary.iterations} iterations")


def _sweep_point(job):
    raw, param, value, lenient, k_max, run_dir, seed, dump_poses = job
    variant = copy.deepcopy(raw)
    _set_path(variant, param, value)
    if param == "robots.count":
        variant.get("robots", {}).pop("poses", None)  # explicit poses fix one N
    config = scenario_from_dict(variant, strict=not lenient)
    if k_max is not None:
        config.stop.k_max = k_max
    return value, execute(config, Path(run_dir), seed=seed, dump_poses=dump_poses)


def _cmd_sweep(args) -> int:
    raw = yaml.safe_load(Path(args.scenario).read_text())
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        print("--values: nothing to sweep", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["param,value,spill_id,k_stop,completeness,residual_area,distance_total,max_k_stop"]
    all_ok = True
    jobs = [
        (
            raw,
            args.param,
            value,
            args.lenient,
            args.k_max,
            str(out_dir / f"{args.param.replace('.', '_')}_{value}"),
            args.seed,
            args.poses,
        )
        for value in values
    ]
    if getattr(args, "parallel", 1) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            outcomes = dict(pool.map(_sweep_point, jobs))
    else:
        outcomes = dict(_sweep_point(job) for job in jobs)
    for value in values:
        summary = outcomes[value]
        all_ok = all_ok and summary.all_complete
        stops = [r["k_stop"] for r in summary.spill_rows if r["k_stop"] is not None]
        max_stop = max(stops) if stops and len(stops) == len(summary.spill_rows) else ""
        for row in summary.spill_rows:
            rows.append(
                ",".join(
                    [
                        args.param,
                        str(value),
                        str(row["spill_id"]),
                        str(row["k_stop"]) if row["k_stop"] is not None else "",
                        f"{row['completeness']:.4f}",
                        f"{row['residual_area']:.{FIXED_DECIMALS}f}",
                        f"{row['distance_total']:.{FIXED_DECIMALS}f}",
                        str(max_stop),
                    ]
                )
            )
        if not args.quiet:
            print(f"{args.param}={value}: complete={summary.all_complete} max_k_stop={max_stop}")
    (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    return 0 if all_ok else 1


def _parse_value(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


def _set_path(raw: dict, dotted: str, value):
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


if __name__ == "__main__":
    sys.exit(main())
