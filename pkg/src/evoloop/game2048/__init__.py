"""2048 engine and solver evaluation harness."""

from .engine import (
    DIRECTIONS,
    GridError,
    apply_move,
    as_grid,
    empty_grid,
    is_game_over,
    legal_moves,
    new_game,
    slide_merge_row,
    spawn_tile,
)
from .harness import GameResult, SolverMetrics, evaluate_solver, play_game
from .policies import BUILTIN_POLICIES, Policy, PolicyError, PolicySpec, PolicyTimeout

__all__ = [
    "BUILTIN_POLICIES",
    "DIRECTIONS",
    "GameResult",
    "GridError",
    "Policy",
    "PolicyError",
    "PolicySpec",
    "PolicyTimeout",
    "SolverMetrics",
    "apply_move",
    "as_grid",
    "empty_grid",
    "evaluate_solver",
    "is_game_over",
    "legal_moves",
    "new_game",
    "play_game",
    "slide_merge_row",
    "spawn_tile",
]
