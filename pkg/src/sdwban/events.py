"""Deterministic event queue ordered by (time, insertion sequence)."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Any


class EventKind(enum.Enum):
    SENSOR_SAMPLE = "sensor_sample"
    FRAME_ARRIVAL = "frame_arrival"
    FRAME_LOSS = "frame_loss"
    TIMER_FIRE = "timer_fire"
    MOBILITY_STEP = "mobility_step"
    NODE_CRASH = "node_crash"
    NODE_RECOVER = "node_recover"


@dataclass(order=True)
class Event:
    at: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class SchedulerError(RuntimeError):
    """Internal scheduler invariant broken; the run cannot continue."""


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: float, kind: EventKind, payload: Any = None) -> Event:
        if at < self.now:
            raise SchedulerError(f"cannot schedule {kind.value} at {at} before now={self.now}")
        ev = Event(at, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def peek_time(self) -> float:
        return self._heap[0].at

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.at
        return ev
