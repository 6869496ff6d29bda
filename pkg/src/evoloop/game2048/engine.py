"""Deterministic 4x4 2048 mechanics.

Grids are ``numpy`` integer arrays of shape (4, 4); zero marks an empty cell and
every other cell holds a power of two.  Moves never mutate their input.
"""

from __future__ import annotations

import random
from typing import Sequence

import numpy as np

DIRECTIONS = ("left", "right", "up", "down")
SIZE = 4


class GridError(ValueError):
    """Raised for malformed grids or impossible engine requests."""


def as_grid(cells: Sequence[Sequence[int]] | np.ndarray) -> np.ndarray:
    """Validate ``cells`` and return them as a fresh int64 4x4 array."""
    grid = np.array(cells, dtype=np.int64)
    if grid.shape != (SIZE, SIZE):
        raise GridError(f"grid must be 4x4, got shape {grid.shape}")
    nonzero = grid[grid != 0]
    if np.any(nonzero < 2) or np.any(nonzero & (nonzero - 1)):
        raise GridError("nonzero cells must be powers of two >= 2")
    return grid


def empty_grid() -> np.ndarray:
    return np.zeros((SIZE, SIZE), dtype=np.int64)


def slide_merge_row(row: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Slide ``row`` to the left, merging equal neighbours once per move.

    Returns the new row and the score gained (sum of the merged tiles).

    >>> slide_merge_row([2, 2, 2, 2])
    ((4, 4, 0, 0), 8)
    """
    tiles = [int(v) for v in row if v]
    out: list[int] = []
    gain = 0
    i = 0
    while i < len(tiles):
        if i + 1 < len(tiles) and tiles[i] == tiles[i + 1]:
            merged = tiles[i] * 2
            out.append(merged)
            gain += merged
            i += 2
        else:
            out.append(tiles[i])
            i += 1
    out.extend([0] * (len(row) - len(out)))
    return tuple(out), gain


def _move_left(grid: np.ndarray) -> tuple[np.ndarray, int]:
    result = np.empty_like(grid)
    gain = 0
    for r in range(SIZE):
        row, g = slide_merge_row(grid[r])
        result[r] = row
        gain += g
    return result, gain


def apply_move(grid: np.ndarray, direction: str) -> tuple[np.ndarray, int, bool]:
    """Apply one move; return ``(new_grid, gain, changed)``.

    Every direction is expressed through the left move: ``right`` mirrors the
    grid horizontally, ``up`` transposes it, ``down`` does both.
    """
    grid = np.asarray(grid, dtype=np.int64)
    if direction == "left":
        moved, gain = _move_left(grid)
    elif direction == "right":
        moved, gain = _move_left(np.fliplr(grid))
        moved = np.fliplr(moved)
    elif direction == "up":
        moved, gain = _move_left(grid.T)
        moved = moved.T
    elif direction == "down":
        moved, gain = _move_left(np.fliplr(grid.T))
        moved = np.fliplr(moved).T
    else:
        raise GridError(f"unknown direction {direction!r}")
    moved = np.ascontiguousarray(moved)
    return moved, gain, not np.array_equal(moved, grid)


def legal_moves(grid: np.ndarray) -> list[str]:
    return [d for d in DIRECTIONS if apply_move(grid, d)[2]]


def is_game_over(grid: np.ndarray) -> bool:
    grid = np.asarray(grid)
    if not grid.all():
        return False
    return not legal_moves(grid)


def spawn_tile(grid: np.ndarray, rng: random.Random) -> np.ndarray:
    """Return a copy of ``grid`` with one new tile in a uniformly chosen empty cell.

    The new tile is a 2 with probability 0.9 and a 4 otherwise.
    """
    empties = [(r, c) for r in range(SIZE) for c in range(SIZE) if grid[r][c] == 0]
    if not empties:
        raise GridError("cannot spawn a tile on a full grid")
    r, c = empties[rng.randrange(len(empties))]
    out = np.array(grid, dtype=np.int64)
    out[r, c] = 2 if rng.random() < 0.9 else 4
    return out


def new_game(rng: random.Random) -> np.ndarray:
    """Opening position: two spawned tiles on an empty grid."""
    return spawn_tile(spawn_tile(empty_grid(), rng), rng)
