"""Move policies: builtin baselines and external solver processes."""

from __future__ import annotations

import queue
import random
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .engine import DIRECTIONS, apply_move, legal_moves

BUILTIN_POLICIES = ("random", "greedy_corner", "expectimax_id")


class PolicyError(RuntimeError):
    """The policy crashed or answered outside the protocol."""


class PolicyTimeout(RuntimeError):
    """The policy did not answer within the per-move limit."""


class Policy:
    """A callable ``(grid, score) -> direction``; may hold resources."""

    def __call__(self, grid: np.ndarray, score: int) -> str:  # pragma: no cover
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class FunctionPolicy(Policy):
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, grid, score):
        return self.fn(grid, score)


class RandomPolicy(Policy):
    """Uniform choice among the moves that change the grid."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def __call__(self, grid, score):
        moves = legal_moves(grid)
        return self.rng.choice(moves) if moves else "left"


# -- greedy one-step lookahead (corner weighting, empties, monotonicity) -----

_GREEDY_WEIGHTS = np.array(
    [[16, 12, 8, 6], [12, 10, 6, 4], [8, 6, 4, 2], [6, 4, 2, 1]], dtype=np.float64
)


def _monotone_pairs(grid: np.ndarray) -> int:
    rows = int(np.count_nonzero(grid[:, :-1] >= grid[:, 1:]))
    cols = int(np.count_nonzero(grid[:-1, :] >= grid[1:, :]))
    return rows + cols


def greedy_corner_value(grid: np.ndarray) -> float:
    return (
        float(np.sum(grid * _GREEDY_WEIGHTS))
        + 10 * int(np.count_nonzero(grid == 0))
        + _monotone_pairs(grid)
    )


class GreedyCornerPolicy(Policy):
    def __call__(self, grid, score):
        best, best_value = "left", float("-inf")
        for d in DIRECTIONS:
            moved, _, changed = apply_move(grid, d)
            if changed:
                value = greedy_corner_value(moved)
                if value > best_value:
                    best, best_value = d, value
        return best


# -- expectimax with iterative deepening -------------------------------------
#
# Boards are tuples of four row tuples so they can key the caches below.

_ID_WEIGHTS = (
    (16, 12, 8, 4),
    (12, 10, 6, 3),
    (8, 6, 4, 2),
    (4, 3, 2, 1),
)


@lru_cache(maxsize=None)
def _row_left(row: tuple[int, ...]) -> tuple[int, ...]:
    tiles = [v for v in row if v]
    out = []
    i = 0
    while i < len(tiles):
        if i + 1 < len(tiles) and tiles[i] == tiles[i + 1]:
            out.append(tiles[i] * 2)
            i += 2
        else:
            out.append(tiles[i])
            i += 1
    return tuple(out + [0] * (4 - len(out)))


@lru_cache(maxsize=None)
def _row_right(row: tuple[int, ...]) -> tuple[int, ...]:
    return _row_left(row[::-1])[::-1]


def _transpose(board):
    return tuple(zip(*board))


def _board_move(board, direction):
    if direction == "left":
        return tuple(_row_left(r) for r in board)
    if direction == "right":
        return tuple(_row_right(r) for r in board)
    if direction == "up":
        return _transpose(tuple(_row_left(r) for r in _transpose(board)))
    return _transpose(tuple(_row_right(r) for r in _transpose(board)))


@lru_cache(maxsize=None)
def _line_shape(line: tuple[int, ...]) -> float:
    # smoothness (scaled by 1/16) plus twice the count of non-increasing pairs
    smooth = -sum(abs(line[i] - line[i + 1]) for i in range(3))
    mono = sum(1 for i in range(3) if line[i] >= line[i + 1])
    return smooth / 16 + mono * 2


@lru_cache(maxsize=None)
def _row_value(index: int, row: tuple[int, ...]) -> float:
    weights = _ID_WEIGHTS[index]
    weighted = sum(w * v for w, v in zip(weights, row))
    return weighted + 20 * row.count(0) + _line_shape(row)


def expectimax_value(board) -> float:
    """Corner-weighted sum + 20 per empty cell + smoothness/16 + 2 per monotone pair."""
    total = 0.0
    for i, row in enumerate(board):
        total += _row_value(i, row)
    for col in zip(*board):
        total += _line_shape(col)
    return total


class _OutOfTime(Exception):
    pass


class ExpectimaxPolicy(Policy):
    """Expectimax over player moves and tile spawns, deepened until the budget runs out.

    Depth counts both player and chance layers; a depth that cannot finish
    inside the budget is abandoned and the previous depth's answer is kept.
    Deepening also stops early when the next depth is predicted not to fit.
    """

    def __init__(self, time_budget: float = 4.8, max_depth: int = 7):
        self.time_budget = time_budget
        self.max_depth = max_depth

    def __call__(self, grid, score):
        board = tuple(tuple(int(v) for v in row) for row in np.asarray(grid))
        start = time.perf_counter()
        self._deadline = start + self.time_budget
        best = None
        last_elapsed = None
        for depth in range(1, self.max_depth + 1):
            self._cache = {}
            t0 = time.perf_counter()
            try:
                choice = self._best_move(board, depth)
            except _OutOfTime:
                break
            if choice is None:
                break
            best = choice
            spent = time.perf_counter() - t0
            if last_elapsed and last_elapsed > 0:
                growth = max(spent / last_elapsed, 1.0)
                if time.perf_counter() + spent * growth > self._deadline:
                    break
            last_elapsed = spent
        if best is None:
            moves = legal_moves(grid)
            best = moves[0] if moves else "left"
        return best

    def _best_move(self, board, depth):
        best, best_value = None, float("-inf")
        for d in DIRECTIONS:
            moved = _board_move(board, d)
            if moved != board:
                value = self._chance(moved, depth)
                if value > best_value:
                    best, best_value = d, value
        return best

    def _chance(self, board, depth):
        if depth == 0:
            return expectimax_value(board)
        key = (board, depth, True)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if time.perf_counter() > self._deadline:
            raise _OutOfTime
        empties = [(r, c) for r in range(4) for c in range(4) if board[r][c] == 0]
        if not empties:
            return expectimax_value(board)
        total = 0.0
        rows = [list(r) for r in board]
        for r, c in empties:
            for tile, p in ((2, 0.9), (4, 0.1)):
                rows[r][c] = tile
                child = tuple(tuple(x) for x in rows)
                total += p * self._player(child, depth - 1)
            rows[r][c] = 0
        value = total / len(empties)
        self._cache[key] = value
        return value

    def _player(self, board, depth):
        if depth == 0:
            return expectimax_value(board)
        key = (board, depth, False)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        best = float("-inf")
        for d in DIRECTIONS:
            moved = _board_move(board, d)
            if moved != board:
                best = max(best, self._chance(moved, depth - 1))
        if best == float("-inf"):
            best = expectimax_value(board)
        self._cache[key] = best
        return best


class ExternalPolicy(Policy):
    """A solver process speaking the line protocol on stdin/stdout."""

    def __init__(self, command: list[str], move_timeout: float = 5.0):
        self.command = list(command)
        self.move_timeout = move_timeout
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise PolicyError(f"cannot start policy {self.command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr: list[str] = []
        threading.Thread(target=self._pump, daemon=True).start()
        threading.Thread(target=self._drain_stderr, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _drain_stderr(self):
        for line in self.proc.stderr:
            self._stderr.append(line)
            del self._stderr[:-50]

    def _stderr_tail(self) -> str:
        return "".join(self._stderr[-10:]).strip()

    def __call__(self, grid, score):
        request = "".join(" ".join(str(int(v)) for v in row) + "\n" for row in grid)
        request += f"SCORE {int(score)}\n"
        try:
            self.proc.stdin.write(request)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PolicyError(f"policy process closed its input: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.move_timeout)
        except queue.Empty:
            raise PolicyTimeout(f"no answer within {self.move_timeout}s") from None
        if line is None:
            self.proc.wait(timeout=5)
            raise PolicyError(
                f"policy exited with code {self.proc.returncode}: {self._stderr_tail()}"
            )
        answer = line.strip()
        if answer not in DIRECTIONS:
            raise PolicyError(f"unrecognised answer {answer!r}")
        return answer

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@dataclass(frozen=True)
class PolicySpec:
    """How to obtain a policy for one game.

    ``kind`` is ``"builtin"`` (with ``name`` from :data:`BUILTIN_POLICIES`) or
    ``"external_process"`` (with ``command``).  ``search_time_budget`` bounds the
    builtin expectimax search; ``move_timeout`` bounds each answer.
    """

    kind: str
    name: str | None = None
    command: tuple[str, ...] = field(default=())
    move_timeout: float = 5.0
    search_time_budget: float | None = None

    def __post_init__(self):
        if self.move_timeout <= 0:
            raise ValueError("move_timeout must be positive")
        if self.kind == "builtin":
            if self.name not in BUILTIN_POLICIES:
                raise ValueError(f"unknown builtin policy {self.name!r}")
        elif self.kind == "external_process":
            if not self.command:
                raise ValueError("external_process policy needs a command")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def builtin(cls, name: str, **kwargs) -> "PolicySpec":
        return cls(kind="builtin", name=name, **kwargs)

    @classmethod
    def external(cls, command, **kwargs) -> "PolicySpec":
        return cls(kind="external_process", command=tuple(command), **kwargs)

    @classmethod
    def solver_file(cls, path, *, time_limit: float | None = None, **kwargs) -> "PolicySpec":
        """Run a ``move(grid, score)`` source file through :mod:`evoloop.game2048.runner`."""
        command = [sys.executable, "-m", "evoloop.game2048.runner", str(Path(path))]
        if time_limit is not None:
            command += ["--time-limit", repr(float(time_limit))]
        return cls.external(command, search_time_budget=time_limit, **kwargs)

    def build(self, seed: int) -> Policy:
        if self.kind == "external_process":
            return ExternalPolicy(list(self.command), self.move_timeout)
        if self.name == "random":
            return RandomPolicy(random.Random(f"{seed}/policy"))
        if self.name == "greedy_corner":
            return GreedyCornerPolicy()
        budget = self.search_time_budget if self.search_time_budget is not None else 4.8
        return ExpectimaxPolicy(time_budget=budget)
