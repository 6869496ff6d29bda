"""Play seeded games against a policy and aggregate solver metrics."""

from __future__ import annotations

import logging
import random
import time
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np

from .engine import apply_move, is_game_over, new_game, spawn_tile
from .policies import FunctionPolicy, Policy, PolicyError, PolicySpec, PolicyTimeout

log = logging.getLogger(__name__)

DEFAULT_MOVE_CAP = 20_000
MAX_INVALID_PROPOSALS = 3
TERMINATIONS = ("no_moves", "policy_timeout", "policy_error", "move_cap")

PolicyLike = Union[PolicySpec, Policy, Callable[[np.ndarray, int], str]]


@dataclass(frozen=True)
class GameResult:
    final_score: int
    max_tile: int
    valid_moves: int
    termination: str
    seed: int | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _open_policy(policy: PolicyLike, seed: int) -> tuple[Policy, float | None]:
    if isinstance(policy, PolicySpec):
        return policy.build(seed), (None if policy.kind == "external_process" else policy.move_timeout)
    if isinstance(policy, Policy):
        return policy, None
    return FunctionPolicy(policy), None


def play_game(
    policy: PolicyLike,
    seed: int,
    move_cap: int = DEFAULT_MOVE_CAP,
) -> GameResult:
    """Play one game from a seeded opening until the policy or the board gives out.

    A proposal that leaves the grid unchanged is rejected; three rejected
    proposals in a row end the game with ``policy_error``.  Builtin policies
    are timed here, external processes time themselves out in the pipe read.
    """
    if move_cap < 1:
        raise ValueError("move_cap must be >= 1")
    rng = random.Random(seed)
    grid = new_game(rng)
    score = 0
    valid_moves = 0
    rejected = 0
    termination = "no_moves"
    detail = ""
    runner, timeout = _open_policy(policy, seed)
    try:
        while True:
            if is_game_over(grid):
                termination = "no_moves"
                break
            if valid_moves >= move_cap:
                termination = "move_cap"
                break
            started = time.perf_counter()
            try:
                direction = runner(grid.copy(), score)
            except PolicyTimeout as exc:
                termination, detail = "policy_timeout", str(exc)
                break
            except Exception as exc:  # noqa: BLE001 - any policy failure ends the game
                termination, detail = "policy_error", f"{type(exc).__name__}: {exc}"
                break
            if timeout is not None and time.perf_counter() - started > timeout:
                termination, detail = "policy_timeout", f"answer took longer than {timeout}s"
                break
            try:
                moved, gain, changed = apply_move(grid, direction)
            except ValueError as exc:
                termination, detail = "policy_error", str(exc)
                break
            if not changed:
                rejected += 1
                if rejected >= MAX_INVALID_PROPOSALS:
                    termination = "policy_error"
                    detail = f"{rejected} consecutive proposals left the grid unchanged"
                    break
                continue
            rejected = 0
            score += gain
            valid_moves += 1
            grid = spawn_tile(moved, rng)
    finally:
        if runner is not policy:
            runner.close()
    return GameResult(
        final_score=score,
        max_tile=int(grid.max()),
        valid_moves=valid_moves,
        termination=termination,
        seed=seed,
        detail=detail,
    )


@dataclass(frozen=True)
class SolverMetrics:
    avg_score: float
    avg_max_tile: float
    avg_valid_moves: float
    wins: int
    games: tuple[GameResult, ...]

    def as_metrics(self) -> dict[str, float]:
        return {
            "avg_score": self.avg_score,
            "avg_max_tile": self.avg_max_tile,
            "avg_valid_moves": self.avg_valid_moves,
            "wins": float(self.wins),
        }


def evaluate_solver(
    policy: PolicyLike,
    n_games: int = 5,
    base_seed: int = 0,
    move_cap: int = DEFAULT_MOVE_CAP,
) -> SolverMetrics:
    """Play games with seeds ``base_seed .. base_seed + n_games - 1`` and average them.

    ``wins`` counts games whose largest tile reached 2048.  Games ending in a
    policy timeout or error still count; their partial results are averaged in.
    """
    if n_games < 1:
        raise ValueError("n_games must be >= 1")
    results = []
    for i in range(n_games):
        result = play_game(policy, base_seed + i, move_cap)
        log.info("game seed=%d score=%d max_tile=%d moves=%d end=%s",
                 result.seed, result.final_score, result.max_tile,
                 result.valid_moves, result.termination)
        results.append(result)
    n = len(results)
    return SolverMetrics(
        avg_score=sum(r.final_score for r in results) / n,
        avg_max_tile=sum(r.max_tile for r in results) / n,
        avg_valid_moves=sum(r.valid_moves for r in results) / n,
        wins=sum(1 for r in results if r.max_tile >= 2048),
        games=tuple(results),
    )
