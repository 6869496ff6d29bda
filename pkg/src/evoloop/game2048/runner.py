"""Serve a ``move(grid, score) -> str`` solver file over the line protocol.

Usage::

    python -m evoloop.game2048.runner solver.py [--time-limit SECONDS]

Each request is four lines of four space-separated integers followed by a
``SCORE <n>`` line; the reply is one line naming the direction.  The process
exits when stdin closes.

``--time-limit`` rewrites literal ``TIME_LIMIT = <number>`` assignments in the
solver source before it is executed, which is how generated solvers with a
hard-coded search budget are run at reduced budgets.
"""

from __future__ import annotations

import argparse
import re
import sys
import types

import numpy as np

_TIME_LIMIT_RE = re.compile(r"^(\s*TIME_LIMIT\s*=\s*)[0-9]*\.?[0-9]+", re.M)


def override_time_limit(source: str, seconds: float) -> str:
    return _TIME_LIMIT_RE.sub(lambda m: f"{m.group(1)}{seconds!r}", source)


def load_solver(path: str, time_limit: float | None = None):
    with open(path, encoding="utf-8") as fh:
        source = fh.read()
    if time_limit is not None:
        source = override_time_limit(source, time_limit)
    module = types.ModuleType("solver")
    module.__file__ = path
    exec(compile(source, path, "exec"), module.__dict__)
    move = getattr(module, "move", None)
    if not callable(move):
        raise SystemExit(f"{path}: no callable 'move' defined")
    return move


def read_request(stream) -> tuple[np.ndarray, int] | None:
    rows = []
    for _ in range(4):
        line = stream.readline()
        if not line:
            return None
        rows.append([int(v) for v in line.split()])
    score_line = stream.readline()
    if not score_line:
        return None
    label, value = score_line.split()
    if label != "SCORE":
        raise ValueError(f"expected SCORE line, got {score_line!r}")
    return np.array(rows, dtype=np.int64), int(value)


def serve(move, stdin=sys.stdin, stdout=sys.stdout) -> None:
    while True:
        request = read_request(stdin)
        if request is None:
            return
        grid, score = request
        stdout.write(f"{move(grid, score)}\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("solver")
    parser.add_argument("--time-limit", type=float, default=None)
    args = parser.parse_args(argv)
    serve(load_solver(args.solver, args.time_limit))


if __name__ == "__main__":
    main()
