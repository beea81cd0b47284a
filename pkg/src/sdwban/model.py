"""Shared domain types: node identifiers, applications, traffic classes, packets."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Optional


class SdwbanError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SdwbanError):
    """A scenario or call referenced something that does not exist or is inconsistent."""


class ContractViolation(SdwbanError):
    """An operation was called with arguments that break its precondition."""


class InvariantError(SdwbanError):
    """A state change would break a data-structure invariant."""


@dataclass(frozen=True)
class Note:
    """A trace-worthy occurrence produced by a state transition."""

    event: str
    fields: dict


class NodeKind(enum.Enum):
    SENSOR = "s"
    SWITCH = "sw"
    LOCAL_CONTROLLER = "lc"
    CENTRAL_CONTROLLER = "cc"
    GATEWAY = "gw"
    CLOUD = "cloud"

    @property
    def rank(self) -> int:
        return _KIND_ORDER.index(self)


_KIND_ORDER = list(NodeKind)
_NODE_RE = re.compile(r"^(cloud|sw|lc|cc|gw|s)(\d+)$")


@dataclass(frozen=True, order=False)
class NodeId:
    kind: NodeKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"node index must be non-negative, got {self.index}")

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    def __repr__(self) -> str:
        return f"NodeId({self})"

    def sort_key(self) -> tuple[int, int]:
        return (self.kind.rank, self.index)

    def __lt__(self, other: "NodeId") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "NodeId") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "NodeId") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "NodeId") -> bool:
        return self.sort_key() >= other.sort_key()

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        m = _NODE_RE.match(text.strip())
        if not m:
            raise ConfigError(f"not a node id: {text!r}")
        return cls(NodeKind(m.group(1)), int(m.group(2)))


def sensor(i: int) -> NodeId:
    return NodeId(NodeKind.SENSOR, i)


def switch(i: int) -> NodeId:
    return NodeId(NodeKind.SWITCH, i)


def local_controller(i: int) -> NodeId:
    return NodeId(NodeKind.LOCAL_CONTROLLER, i)


def central_controller(i: int = 0) -> NodeId:
    return NodeId(NodeKind.CENTRAL_CONTROLLER, i)


def gateway(i: int = 0) -> NodeId:
    return NodeId(NodeKind.GATEWAY, i)


def cloud(i: int = 0) -> NodeId:
    return NodeId(NodeKind.CLOUD, i)


class AppKind(enum.Enum):
    HEART_RATE = "heart_rate"
    TEMPERATURE = "temperature"
    GLUCOSE = "glucose"
    BLOOD_PRESSURE = "blood_pressure"
    ECG = "ecg"


class TrafficClass(enum.Enum):
    NORMAL = "normal"
    EMERGENCY = "emergency"

    @property
    def rank(self) -> int:
        # higher outranks lower
        return 1 if self is TrafficClass.EMERGENCY else 0

    def outranks(self, other: "TrafficClass") -> bool:
        return self.rank > other.rank


@dataclass(frozen=True)
class PhysiologicalReading:
    app: AppKind
    value: float
    sampled_at: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"reading value must be finite, got {self.value}")


@dataclass(frozen=True)
class FlowKey:
    """Exact-match flow key. ``app is None`` is the emergency wildcard."""

    src_switch: NodeId
    app: Optional[AppKind]
    traffic_class: TrafficClass

    def __post_init__(self):
        if self.app is None and self.traffic_class is not TrafficClass.EMERGENCY:
            raise InvariantError("only emergency keys may wildcard the app")

    @property
    def is_wildcard(self) -> bool:
        return self.app is None

    def matches(self, other: "FlowKey") -> bool:
        if self.src_switch != other.src_switch or self.traffic_class is not other.traffic_class:
            return False
        return self.app is None or self.app is other.app

    def to_dict(self) -> dict:
        return {
            "src_switch": str(self.src_switch),
            "app": None if self.app is None else self.app.value,
            "class": self.traffic_class.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowKey":
        return cls(
            NodeId.parse(d["src_switch"]),
            None if d["app"] is None else AppKind(d["app"]),
            TrafficClass(d["class"]),
        )

    def __str__(self) -> str:
        app = "*" if self.app is None else self.app.value
        return f"({self.src_switch},{app},{self.traffic_class.value})"


@dataclass
class Packet:
    packet_id: int
    src_sensor: NodeId
    src_switch: NodeId
    app: AppKind
    traffic_class: TrafficClass
    reading: PhysiologicalReading
    created_at: float
    size_bits: int
    hop_trace: list[NodeId] = field(default_factory=list)
    # path stamped from the matching flow entry (switch ... gateway)
    route: Optional[tuple[NodeId, ...]] = None

    @property
    def flow_key(self) -> FlowKey:
        return FlowKey(self.src_switch, self.app, self.traffic_class)

    def visit(self, node: NodeId) -> None:
        if node in self.hop_trace:
            raise InvariantError(f"packet {self.packet_id} would loop through {node}")
        self.hop_trace.append(node)

    def next_hop_from(self, node: NodeId) -> Optional[NodeId]:
        if not self.route or node not in self.route:
            return None
        i = self.route.index(node)
        return self.route[i + 1] if i + 1 < len(self.route) else None

    def header(self) -> dict:
        return {
            "packet_id": self.packet_id,
            "src_sensor": str(self.src_sensor),
            "src_switch": str(self.src_switch),
            "app": self.app.value,
            "class": self.traffic_class.value,
            "reading": {
                "app": self.reading.app.value,
                "value": self.reading.value,
                "sampled_at": self.reading.sampled_at,
            },
            "created_at": self.created_at,
            "size_bits": self.size_bits,
            "hop_trace": [str(n) for n in self.hop_trace],
        }

    @classmethod
    def from_header(cls, d: dict) -> "Packet":
        r = d["reading"]
        return cls(
            packet_id=d["packet_id"],
            src_sensor=NodeId.parse(d["src_sensor"]),
            src_switch=NodeId.parse(d["src_switch"]),
            app=AppKind(d["app"]),
            traffic_class=TrafficClass(d["class"]),
            reading=PhysiologicalReading(AppKind(r["app"]), r["value"], r["sampled_at"]),
            created_at=d["created_at"],
            size_bits=d["size_bits"],
            hop_trace=[NodeId.parse(n) for n in d["hop_trace"]],
        )


class PacketFactory:
    """Issues packets with strictly increasing ids for one run.

    ``sensor_apps`` maps every sensor to its (app, parent switch); ``classify``
    is the switch-side classification function bound to the scenario
    thresholds.
    """

    def __init__(self, sensor_apps: dict[NodeId, tuple[AppKind, NodeId]], classify, size_bits):
        self._sensors = sensor_apps
        self._classify = classify
        self._size_bits = size_bits
        self._next_id = 0

    def new_packet(self, sensor_id: NodeId, reading: PhysiologicalReading, now: float) -> Packet:
        try:
            app, parent = self._sensors[sensor_id]
        except KeyError:
            raise ConfigError(f"unknown sensor {sensor_id}") from None
        if reading.app is not app:
            raise ConfigError(
                f"sensor {sensor_id} measures {app.value}, got a {reading.app.value} reading"
            )
        pkt = Packet(
            packet_id=self._next_id,
            src_sensor=sensor_id,
            src_switch=parent,
            app=app,
            traffic_class=self._classify(reading),
            reading=reading,
            created_at=now,
            size_bits=self._size_bits(app),
            hop_trace=[sensor_id],
        )
        self._next_id += 1
        return pkt
