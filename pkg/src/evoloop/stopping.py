"""Termination conditions, combined with any-of semantics."""

from __future__ import annotations

from typing import Optional, Sequence

from .model import StoppingSpec, TaskState


def condition_holds(spec: StoppingSpec, state: TaskState, now: float) -> bool:
    c = state.counters
    if spec.kind == "max_iterations":
        return c.total >= spec.value
    if spec.kind == "max_tokens":
        return c.tokens_used >= spec.value
    if spec.kind == "max_valid_iterations":
        return c.valid >= spec.value
    if spec.kind == "max_consecutive_invalid":
        return c.consecutive_invalid >= spec.value
    if spec.kind == "score_threshold":
        return state.incumbent is not None and state.incumbent.score >= spec.value
    if spec.kind == "time_limit":
        return now - state.started_at >= spec.value
    raise ValueError(f"unknown stopping condition {spec.kind!r}")


def should_stop(state: TaskState, conditions: Sequence[StoppingSpec], now: float) -> Optional[str]:
    """Name of the first satisfied condition in list order, or ``None``."""
    if not conditions:
        raise ValueError("at least one stopping condition is required")
    for spec in conditions:
        if condition_holds(spec, state, now):
            return spec.kind
    return None
