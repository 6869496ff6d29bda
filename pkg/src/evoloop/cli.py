"""Command-line entry point: ``evoloop run|validate|serve|play2048``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigParseError, load_config
from .model import validate_config
from .orchestrator import run_many
from .statistics import ExportError, export_all

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2


def _load_all(paths: Sequence[str], seed: Optional[int]):
    """Parse and validate every config; return (configs, error lines)."""
    configs, errors = [], []
    for path in paths:
        try:
            config = load_config(path)
        except ConfigParseError as exc:
            errors.append(str(exc))
            continue
        if seed is not None:
            config = dataclasses.replace(config, seed=seed)
        violations = validate_config(config)
        errors += [f"{path}: {v}" for v in violations]
        configs.append(config)
    return configs, errors


def cmd_validate(args) -> int:
    _, errors = _load_all(args.configs, None)
    for line in errors:
        print(line, file=sys.stderr)
    if not errors:
        print(f"{len(args.configs)} config(s) valid")
    return EXIT_INVALID if errors else EXIT_OK


def cmd_run(args) -> int:
    configs, errors = _load_all(args.configs, args.seed)
    if errors:
        for line in errors:
            print(line, file=sys.stderr)
        return EXIT_INVALID
    results = run_many(configs, max_parallel=args.max_parallel)
    out = Path(args.out)
    status = EXIT_OK
    for i, (state, report) in enumerate(results):
        label = f"task-{i}"
        target = out if len(results) == 1 else out / label
        try:
            export_all(report, target)
        except ExportError as exc:
            print(f"{label}: {exc}", file=sys.stderr)
            status = EXIT_ABORTED
        best = "n/a" if report.best is None else f"{report.best['score']:g} (iteration {report.best['iteration']})"
        print(f"{label}: {state.status} ({state.reason}) iterations={state.counters.total} "
              f"valid={state.counters.valid} best={best} -> {target}")
        if state.status != "finished":
            status = EXIT_ABORTED
    return status


def cmd_serve(args) -> int:
    import uvicorn

    from .service import TaskRegistry, create_app

    registry = TaskRegistry(max_parallel=args.max_parallel, snapshot_dir=args.out)
    uvicorn.run(create_app(registry), host=args.host, port=args.port)
    return EXIT_OK


def cmd_play2048(args) -> int:
    from .game2048 import PolicySpec, evaluate_solver

    if args.solver:
        policy = PolicySpec.solver_file(args.solver, time_limit=args.time_limit, move_timeout=args.move_timeout)
    else:
        policy = PolicySpec.builtin(args.policy, search_time_budget=args.time_limit)
    result = evaluate_solver(policy, args.games, args.seed, args.move_cap)
    doc = dict(result.as_metrics(), games=[g.to_dict() for g in result.games])
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoloop", description="Iterative generate-test-evaluate loop runner")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more task configs to completion")
    run.add_argument("configs", nargs="+", help="JSON config files")
    run.add_argument("--out", default="results", help="directory for statistics exports (default: results)")
    run.add_argument("--seed", type=int, help="override the seed of every config")
    run.add_argument("--max-parallel", type=int, default=1, help="tasks run concurrently (default: 1)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check configs without running them")
    val.add_argument("configs", nargs="+")
    val.set_defaults(func=cmd_validate)

    serve = sub.add_parser("serve", help="start the REST task service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--max-parallel", type=int, default=2)
    serve.add_argument("--out", help="snapshot each task's statistics under this directory")
    serve.set_defaults(func=cmd_serve)

    play = sub.add_parser("play2048", help="evaluate a 2048 policy over seeded games")
    group = play.add_mutually_exclusive_group()
    group.add_argument("--policy", default="greedy_corner", help="builtin policy name")
    group.add_argument("--solver", help="solver file defining move(grid, score)")
    play.add_argument("--games", type=int, default=5)
    play.add_argument("--seed", type=int, default=0, help="seed of the first game")
    play.add_argument("--time-limit", type=float, help="search budget per move in seconds")
    play.add_argument("--move-timeout", type=float, default=5.0)
    play.add_argument("--move-cap", type=int, default=20_000)
    play.set_defaults(func=cmd_play2048)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_parallel", 1) < 1:
        print("--max-parallel must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
