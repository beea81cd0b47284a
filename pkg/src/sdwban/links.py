"""Stochastic link model: fixed latency plus serialization, Bernoulli loss."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional

from .events import Event, EventKind, EventQueue
from .model import NodeId


class LinkKind(enum.Enum):
    BODY = "body"                  # sensor -> switch
    UPLINK = "uplink"              # switch -> relay switch / gateway
    CONTROL = "control"            # switch <-> controller
    INTERCONNECT = "interconnect"  # controller <-> controller, wired
    BACKHAUL = "backhaul"          # gateway -> cloud


RADIO_KINDS = {LinkKind.BODY, LinkKind.UPLINK, LinkKind.CONTROL}


@dataclass(frozen=True)
class LinkParams:
    base_latency_s: float
    bandwidth_bps: float
    loss_prob: float = 0.0

    def __post_init__(self):
        if self.base_latency_s < 0:
            raise ValueError("base_latency_s must be non-negative")
        if not self.bandwidth_bps > 0:
            raise ValueError("bandwidth_bps must be positive")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")


DEFAULT_LINKS = {
    LinkKind.BODY: LinkParams(0.002, 250_000.0, 0.0),
    LinkKind.UPLINK: LinkParams(0.005, 250_000.0, 0.0),
    LinkKind.CONTROL: LinkParams(0.01, 250_000.0, 0.0),
    LinkKind.INTERCONNECT: LinkParams(0.001, 100_000_000.0, 0.0),
    LinkKind.BACKHAUL: LinkParams(0.05, 10_000_000.0, 0.0),
}


@dataclass(frozen=True)
class LinkModel:
    a: NodeId
    b: NodeId
    kind: LinkKind
    base_latency_s: float
    bandwidth_bps: float
    loss_prob: float = 0.0

    def __post_init__(self):
        LinkParams(self.base_latency_s, self.bandwidth_bps, self.loss_prob)
        if self.kind is LinkKind.INTERCONNECT and self.loss_prob != 0.0:
            raise ValueError("controller interconnect is wired and lossless")

    @classmethod
    def between(cls, a: NodeId, b: NodeId, kind: LinkKind, params: LinkParams) -> "LinkModel":
        return cls(a, b, kind, params.base_latency_s, params.bandwidth_bps, params.loss_prob)

    @property
    def endpoints(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b)

    def serialization_s(self, bits: int) -> float:
        return bits / self.bandwidth_bps

    def delay(self, bits: int) -> float:
        return self.base_latency_s + bits / self.bandwidth_bps


@dataclass
class Frame:
    src: NodeId
    dst: NodeId
    kind: LinkKind
    body: object  # Packet or ControlMessage
    sent_at: float
    reason: Optional[str] = None


def transmit(
    link: LinkModel,
    frame: Frame,
    now: float,
    rng: random.Random,
    queue: EventQueue,
    *,
    in_range: bool = True,
    alive: bool = True,
) -> Event:
    """Put ``frame`` on ``link`` and schedule its arrival or loss."""
    if not in_range:
        frame.reason = "out_of_range"
        return queue.schedule(now, EventKind.FRAME_LOSS, frame)
    if not alive:
        frame.reason = "endpoint_down"
        return queue.schedule(now, EventKind.FRAME_LOSS, frame)
    at = now + link.delay(frame.body.size_bits)
    if rng.random() < link.loss_prob:
        frame.reason = "link_loss"
        return queue.schedule(at, EventKind.FRAME_LOSS, frame)
    return queue.schedule(at, EventKind.FRAME_ARRIVAL, frame)


def link_stream(seed: int, a: NodeId, b: NodeId) -> random.Random:
    return random.Random(f"{seed}/link/{a}->{b}")
