"""Fixed-timestep clock, task scheduler and per-node random streams.

Simulation time is an integer tick count; one tick is 10 ms. Every task
fires during a tick and tasks sharing a tick run in (owner node, insertion
sequence) order, so a run is fully reproducible.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TICK_MS = 10
TICKS_PER_SECOND = 1000 // TICK_MS
TICK_US = TICK_MS * 1000


class PastTimeError(ValueError):
    """Raised when a task is scheduled before the current tick."""


def seconds_to_ticks(seconds: float) -> int:
    return int(round(seconds * TICKS_PER_SECOND))


def ticks_to_seconds(ticks: int) -> float:
    return ticks / TICKS_PER_SECOND


@dataclass
class SimClock:
    now: int = 0
    tick_length_ms: int = TICK_MS

    @property
    def seconds(self) -> float:
        return ticks_to_seconds(self.now)

    @property
    def now_us(self) -> int:
        return self.now * TICK_US


@dataclass(order=True)
class TaskToken:
    fire_time: int
    owner_node: int
    sequence: int
    id: int = field(compare=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        self.cancelled = True


class Scheduler:
    """Priority queue of deferred actions keyed by (tick, owner, sequence)."""

    def __init__(self, clock: SimClock | None = None):
        self.clock = clock or SimClock()
        # entries are (fire_time, owner, sequence, token, task); plain tuples compare fast
        self._heap: list[tuple[int, int, int, TaskToken, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._ids = itertools.count(1)
        self.executed = 0

    @property
    def now(self) -> int:
        return self.clock.now

    def schedule_at(self, t: int, owner: int, task: Callable[[], None]) -> TaskToken:
        if t < self.clock.now:
            raise PastTimeError(f"cannot schedule at tick {t}, now is {self.clock.now}")
        seq = next(self._seq)
        token = TaskToken(t, owner, seq, next(self._ids))
        heapq.heappush(self._heap, (t, owner, seq, token, task))
        return token

    def every(
        self,
        period: int,
        owner: int,
        task: Callable[[], None],
        start: int | None = None,
    ) -> TaskToken:
        """Run ``task`` every ``period`` ticks, first at ``start`` (default now + period).

        The returned token cancels the whole series.
        """
        if period < 1:
            raise ValueError("period must be at least one tick")
        first = self.clock.now + period if start is None else start
        series = TaskToken(first, owner, -1, next(self._ids))

        def fire(t: int) -> None:
            if series.cancelled:
                return
            task()
            if not series.cancelled:
                self.schedule_at(t + period, owner, lambda: fire(t + period))

        self.schedule_at(first, owner, lambda: fire(first))
        return series

    def pending(self) -> int:
        return sum(1 for *_, tok, _ in self._heap if not tok.cancelled)

    def run(self, until: int, observer: Callable[[TaskToken], None] | None = None) -> int:
        """Execute every task with fire_time <= until; returns the count executed."""
        if until < self.clock.now:
            raise PastTimeError(f"run target {until} is before now {self.clock.now}")
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= until:
            *_, token, task = heapq.heappop(heap)
            if token.cancelled:
                continue
            self.clock.now = token.fire_time
            if observer is not None:
                observer(token)
            task()
            count += 1
        self.clock.now = until
        self.executed += count
        return count


def _derive_key(seed: int, node_id: int, purpose: str) -> int:
    digest = hashlib.blake2b(
        f"{seed & 0xFFFFFFFFFFFFFFFF}:{node_id}:{purpose}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Counter-based (Philox) random stream owned by one node."""

    def __init__(self, seed: int, node_id: int, purpose: str = "default"):
        self.seed = seed
        self.node_id = node_id
        self.purpose = purpose
        self.draw_count = 0
        self._gen = np.random.Generator(np.random.Philox(key=_derive_key(seed, node_id, purpose)))

    def random(self) -> float:
        self.draw_count += 1
        return float(self._gen.random())

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        self.draw_count += 1
        return int(self._gen.integers(low, high))

    def exponential(self, mean: float) -> float:
        self.draw_count += 1
        return float(self._gen.exponential(mean))


class RngRegistry:
    """Hands out one stream per (node, purpose) for a scenario seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[tuple[int, str], RngStream] = {}

    def rng_for(self, node: int, purpose: str = "default") -> RngStream:
        key = (node, purpose)
        if key not in self._streams:
            self._streams[key] = RngStream(self.seed, node, purpose)
        return self._streams[key]
