"""Assemble the conversation sent to the generator each iteration."""

from __future__ import annotations

import random
from dataclasses import replace
from typing import Iterable, Optional, Sequence

from .model import Message, MessageKind, RepeatingSpec, Role


def select_repeating(spec: RepeatingSpec, rng: random.Random) -> tuple[str, RepeatingSpec]:
    """Pick the repeating message for this turn and return the advanced spec.

    Only ``circular`` carries state (its cursor); the other strategies return
    ``spec`` unchanged.
    """
    messages = spec.messages
    if spec.strategy == "single":
        return messages[0], spec
    if spec.strategy == "random":
        return messages[rng.randrange(len(messages))], spec
    if spec.strategy == "random_weighted":
        return rng.choices(messages, weights=spec.weights, k=1)[0], spec
    if spec.strategy == "circular":
        message = messages[spec.cursor]
        return message, replace(spec, cursor=(spec.cursor + 1) % len(messages))
    raise ValueError(f"unknown selection strategy {spec.strategy!r}")


def compose_iteration_prompt(
    repeating_message: str,
    feedback_items: Sequence[str],
    timestamp=None,
) -> Message:
    """One user turn: the repeating message, then each feedback item, blank-line separated."""
    parts = [p for p in (repeating_message, *feedback_items) if p]
    if not parts:
        raise ValueError("cannot compose a prompt from empty inputs")
    kind = MessageKind.FEEDBACK if any(feedback_items) else MessageKind.REPEATING
    return Message(Role.USER, "\n\n".join(parts), kind, timestamp)


def trim_context(history: Iterable[Message], window: Optional[int]) -> list[Message]:
    """Keep the system message plus the last ``window`` other messages.

    ``window=None`` keeps everything; ``0`` keeps only the system message.
    """
    history = list(history)
    system = [m for m in history if m.role is Role.SYSTEM][:1]
    rest = [m for m in history if m.role is not Role.SYSTEM]
    if window is None:
        return system + rest
    return system + (rest[-window:] if window > 0 else [])


def render_template(template: str, **values: object) -> str:
    """Substitute ``{name}`` placeholders for the given names only.

    Other braces are left alone, so templates may contain literal JSON or
    instructions such as ``Rating: {value}``.
    """
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out
