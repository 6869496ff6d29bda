"""Clocks, sortable identifiers and seeded random streams shared by a task."""

from __future__ import annotations

import random
import secrets
import threading
import time
from datetime import datetime, timezone

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


class WallClock:
    """Real time."""

    logical = False

    def now(self) -> float:
        return time.time()


class LogicalClock:
    """Deterministic clock: every reading advances time by ``step`` seconds.

    Used for replay runs so that recorded timings, timestamps and time-based
    stopping are reproducible byte for byte.
    """

    logical = True

    def __init__(self, start: float = 1_700_000_000.0, step: float = 0.001):
        self._ticks = 0
        self._start = start
        self._step = step
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            value = self._start + self._ticks * self._step
            self._ticks += 1
        return value


def to_datetime(seconds: float) -> datetime:
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


def ulid(timestamp: float, rng: random.Random | None = None) -> str:
    """26-character Crockford base32 id: 48-bit millisecond time + 80 random bits."""
    ms = int(round(timestamp * 1000)) & ((1 << 48) - 1)
    bits = rng.getrandbits(80) if rng is not None else secrets.randbits(80)
    value = (ms << 80) | bits
    chars = []
    for _ in range(26):
        chars.append(_CROCKFORD[value & 31])
        value >>= 5
    return "".join(reversed(chars))


def resolve_seed(seed: int | None) -> int:
    return seed if seed is not None else secrets.randbits(63)


def stream(seed: int, label: str) -> random.Random:
    """Independent random stream for one consumer, derived from the task seed."""
    return random.Random(f"{seed}/{label}")
