import argparse
import logging
import sys

from xdmasim.bench.harness import run_transfer, verify_functional
from xdmasim.bench.kvcache import STAGES, kvcache_bench
from xdmasim.bench.sweep import (
    BUILTIN_GRIDS,
    CSV_FIELDS,
    SUMMARY_FIELDS,
    format_csv,
    summarize,
    summary_path,
    sweep_reshape,
    write_csv,
)
from xdmasim.config.soc import SocConfig, default_config, with_overrides
from xdmasim.errors import OracleMismatch, XdmaError
from xdmasim.parser import load_config, load_grid, load_tasks
from xdmasim.parser.tasks import SweepGrid


def _config(args) -> SocConfig:
    config = default_config() if args.config == "default" else load_config(args.config)
    if args.cycle_budget is not None:
        config = with_overrides(config, cycle_budget=args.cycle_budget)
    return config


def _grid(name: str) -> SweepGrid:
    if name in BUILTIN_GRIDS:
        return BUILTIN_GRIDS[name]()
    return load_grid(name)


def _emit(rows: list[dict], fields, path: str | None) -> None:
    if path is None:
        sys.stdout.write(format_csv(rows, fields))
    else:
        write_csv(path, rows, fields)


def cmd_run(args) -> int:
    metrics = run_transfer(_config(args), load_tasks(args.tasks), args.seed, args.trace)
    row = metrics.as_row()
    _emit([row], list(row), args.csv)
    return 0


def cmd_verify(args) -> int:
    tasks = load_tasks(args.tasks)
    verify_functional(_config(args), tasks, args.seed)
    print(f"{len(tasks.tasks)} tasks match the reference")
    return 0


def cmd_sweep(args) -> int:
    grid = _grid(args.grid)
    rows = sweep_reshape(_config(args), grid, args.jobs, args.seed)
    summary = summarize(rows)
    _emit(rows, CSV_FIELDS, args.csv)
    if args.csv is not None:
        write_csv(summary_path(args.csv), summary, SUMMARY_FIELDS)
    sys.stderr.write(format_csv(summary, SUMMARY_FIELDS))
    failed = [r for r in rows if r["status"] != "ok"]
    for row in failed:
        point = f"{row['setup']} {row['layout_src']}->{row['layout_dst']} {row['m']}"
        print("[!]", point, row["status"], file=sys.stderr)
    return 2 if any(r["status"].startswith("mismatch") for r in failed) else 0


def cmd_kvcache(args) -> int:
    result = kvcache_bench(_config(args), args.stage, args.rows, args.cols, args.seed)
    row = result.as_row()
    _emit([row], list(row), args.csv)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xdmasim", description="Cycle-level simulator of a distributed DMA architecture."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="SoC config JSON, or 'default'")
    common.add_argument("--seed", type=int, default=0, help="seed of the source data")
    common.add_argument("--cycle-budget", type=int, default=None)
    common.add_argument("--csv", default=None, help="write CSV here instead of stdout")

    run = sub.add_parser("run", parents=[common], help="simulate a task file")
    run.add_argument("tasks")
    run.add_argument("--trace", default=None, help="JSON-lines trace output")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", parents=[common], help="functional check without timing")
    verify.add_argument("tasks")
    verify.set_defaults(func=cmd_verify)

    sweep = sub.add_parser("sweep", parents=[common], help="layout transformation sweep")
    sweep.add_argument("grid", help=f"grid JSON, or one of {', '.join(BUILTIN_GRIDS)}")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    kv = sub.add_parser("kvcache", parents=[common], help="KV-cache prefill/load benchmark")
    kv.add_argument("--stage", choices=STAGES, required=True)
    kv.add_argument("--rows", type=int, default=2048)
    kv.add_argument("--cols", type=int, default=512)
    kv.set_defaults(func=cmd_kvcache)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OracleMismatch as error:
        print("[!]", error, file=sys.stderr)
        return 2
    except (XdmaError, OSError) as error:
        print("[!]", error, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
