"""Waypoint mobility and nearest-attachment handover detection."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .links import LinkKind
from .model import NodeId

Point = tuple[float, float]


@dataclass
class MobilityPlan:
    """Piecewise-linear walk through ``waypoints``; ``speeds[i]`` is used on segment i."""

    waypoints: list[Point]
    speeds: list[float]
    start_s: float = 0.0
    _times: list[float] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("a mobility plan needs at least one waypoint")
        if len(self.speeds) == 1 and len(self.waypoints) > 2:
            self.speeds = self.speeds * (len(self.waypoints) - 1)
        if len(self.waypoints) > 1 and len(self.speeds) != len(self.waypoints) - 1:
            raise ValueError("need one speed per segment (or a single speed)")
        if any(not s > 0 for s in self.speeds):
            raise ValueError("speeds must be positive")
        times = [self.start_s]
        for (a, b), v in zip(zip(self.waypoints, self.waypoints[1:]), self.speeds):
            times.append(times[-1] + math.dist(a, b) / v)
        self._times = times

    @property
    def max_speed(self) -> float:
        return max(self.speeds, default=0.0)

    @property
    def stationary(self) -> bool:
        return len(self.waypoints) == 1 or all(a == b for a, b in zip(self.waypoints, self.waypoints[1:]))

    def position_at(self, t: float) -> Point:
        if t <= self._times[0] or len(self.waypoints) == 1:
            return self.waypoints[0]
        for i in range(len(self.waypoints) - 1):
            t0, t1 = self._times[i], self._times[i + 1]
            if t <= t1:
                (x0, y0), (x1, y1) = self.waypoints[i], self.waypoints[i + 1]
                f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
        return self.waypoints[-1]


def random_waypoint_plan(
    rng: random.Random,
    floor_plan: Point,
    n_waypoints: int,
    speed_range: tuple[float, float],
    start: Optional[Point] = None,
    start_s: float = 0.0,
) -> MobilityPlan:
    """Expand a seeded random-waypoint walk into an explicit plan."""
    w, h = floor_plan
    pts = [start if start is not None else (rng.uniform(0, w), rng.uniform(0, h))]
    for _ in range(n_waypoints):
        pts.append((rng.uniform(0, w), rng.uniform(0, h)))
    lo, hi = speed_range
    speeds = [rng.uniform(lo, hi) for _ in range(len(pts) - 1)] or [lo]
    return MobilityPlan(pts, speeds, start_s)


def nearest_attachment(
    pos: Point,
    candidates: Sequence[NodeId],
    positions: dict[NodeId, Point],
    radio_range_m: float,
) -> Optional[NodeId]:
    best = None
    for c in candidates:
        p = positions.get(c)
        if p is None:
            continue
        d = math.dist(pos, p)
        if d > radio_range_m:
            continue
        if best is None or (d, c.sort_key()) < (best[0], best[1].sort_key()):
            best = (d, c)
    return None if best is None else best[1]


@dataclass(frozen=True)
class HandoverEvent:
    switch: NodeId
    old: Optional[NodeId]
    new: NodeId
    position: Point


def mobility_step(topo, switch: NodeId, now: float) -> tuple[Point, list[HandoverEvent]]:
    """Advance ``switch`` (a patient's cluster head) to its position at ``now``."""
    plan = topo.mobility[switch]
    pos = plan.position_at(now)
    topo.positions[switch] = pos
    new = nearest_attachment(pos, topo.attachment_candidates(), topo.positions, topo.radio_range(LinkKind.UPLINK))
    old = topo.attachment.get(switch)
    if new is None or new == old:
        return pos, []
    topo.attachment[switch] = new
    return pos, [HandoverEvent(switch, old, new, pos)]
