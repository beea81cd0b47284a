"""Control-plane message vocabulary and its dict encoding."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

from .flows import FlowEntry
from .model import NodeId, Packet


class Variant(enum.Enum):
    HELLO = "hello"
    ASSOCIATE = "associate"
    ASSOCIATE_ACK = "associate_ack"
    PACKET_IN = "packet_in"
    FLOW_MOD = "flow_mod"
    EMERGENCY_BROADCAST = "emergency_broadcast"
    LOW_BATTERY = "low_battery"
    HANDOVER_NOTICE = "handover_notice"
    CONTROLLER_HEARTBEAT = "controller_heartbeat"


# nominal on-air sizes; headers only, no real OpenFlow encoding
CONTROL_BITS = {
    Variant.HELLO: 256,
    Variant.ASSOCIATE: 320,
    Variant.ASSOCIATE_ACK: 512,
    Variant.PACKET_IN: 640,
    Variant.FLOW_MOD: 512,
    Variant.EMERGENCY_BROADCAST: 512,
    Variant.LOW_BATTERY: 256,
    Variant.HANDOVER_NOTICE: 384,
    Variant.CONTROLLER_HEARTBEAT: 256,
}


@dataclass(frozen=True)
class Hello:
    def to_dict(self) -> dict:
        return {}

    @classmethod
    def from_dict(cls, d: dict) -> "Hello":
        return cls()


@dataclass(frozen=True)
class Associate:
    patient: Optional[int]

    def to_dict(self) -> dict:
        return {"patient": self.patient}

    @classmethod
    def from_dict(cls, d: dict) -> "Associate":
        return cls(d["patient"])


@dataclass(frozen=True)
class AssociateAck:
    # emergency wildcard rule pre-installed on association
    emergency_entry: Optional[FlowEntry]

    def to_dict(self) -> dict:
        return {"emergency_entry": None if self.emergency_entry is None else self.emergency_entry.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AssociateAck":
        e = d["emergency_entry"]
        return cls(None if e is None else FlowEntry.from_dict(e))


@dataclass(frozen=True)
class PacketIn:
    packet: Packet

    def to_dict(self) -> dict:
        return {"packet": self.packet.header()}

    @classmethod
    def from_dict(cls, d: dict) -> "PacketIn":
        return cls(Packet.from_header(d["packet"]))


@dataclass(frozen=True)
class FlowMod:
    entry: FlowEntry

    def to_dict(self) -> dict:
        return {"entry": self.entry.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FlowMod":
        return cls(FlowEntry.from_dict(d["entry"]))


@dataclass(frozen=True)
class EmergencyBroadcast:
    entry: FlowEntry

    def to_dict(self) -> dict:
        return {"entry": self.entry.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EmergencyBroadcast":
        return cls(FlowEntry.from_dict(d["entry"]))


@dataclass(frozen=True)
class LowBattery:
    node: NodeId
    battery_j: float
    relayed: bool = False

    def to_dict(self) -> dict:
        return {"node": str(self.node), "battery_j": self.battery_j, "relayed": self.relayed}

    @classmethod
    def from_dict(cls, d: dict) -> "LowBattery":
        return cls(NodeId.parse(d["node"]), d["battery_j"], d["relayed"])


@dataclass(frozen=True)
class HandoverNotice:
    switch: NodeId
    old_attachment: Optional[NodeId]
    new_attachment: NodeId
    position: tuple[float, float]
    relayed: bool = False

    def to_dict(self) -> dict:
        return {
            "switch": str(self.switch),
            "old_attachment": None if self.old_attachment is None else str(self.old_attachment),
            "new_attachment": str(self.new_attachment),
            "position": list(self.position),
            "relayed": self.relayed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HandoverNotice":
        old = d["old_attachment"]
        return cls(
            NodeId.parse(d["switch"]),
            None if old is None else NodeId.parse(old),
            NodeId.parse(d["new_attachment"]),
            tuple(d["position"]),
            d["relayed"],
        )


@dataclass(frozen=True)
class ControllerHeartbeat:
    # registry replica shipped to peer controllers; None on switch-bound beats
    snapshot: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"snapshot": self.snapshot}

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerHeartbeat":
        return cls(d["snapshot"])


Payload = Union[
    Hello, Associate, AssociateAck, PacketIn, FlowMod, EmergencyBroadcast,
    LowBattery, HandoverNotice, ControllerHeartbeat,
]

_PAYLOAD_TYPES = {
    Variant.HELLO: Hello,
    Variant.ASSOCIATE: Associate,
    Variant.ASSOCIATE_ACK: AssociateAck,
    Variant.PACKET_IN: PacketIn,
    Variant.FLOW_MOD: FlowMod,
    Variant.EMERGENCY_BROADCAST: EmergencyBroadcast,
    Variant.LOW_BATTERY: LowBattery,
    Variant.HANDOVER_NOTICE: HandoverNotice,
    Variant.CONTROLLER_HEARTBEAT: ControllerHeartbeat,
}
_VARIANT_OF = {v: k for k, v in _PAYLOAD_TYPES.items()}


@dataclass(frozen=True)
class ControlMessage:
    sender: NodeId
    receiver: NodeId
    payload: Payload
    sent_at: float = 0.0

    @property
    def variant(self) -> Variant:
        return _VARIANT_OF[type(self.payload)]

    @property
    def size_bits(self) -> int:
        return CONTROL_BITS[self.variant]

    def encode(self) -> dict:
        return {
            "variant": self.variant.value,
            "sender": str(self.sender),
            "receiver": str(self.receiver),
            "sent_at": self.sent_at,
            "payload": self.payload.to_dict(),
        }

    @classmethod
    def decode(cls, d: dict) -> "ControlMessage":
        payload_type = _PAYLOAD_TYPES[Variant(d["variant"])]
        return cls(
            sender=NodeId.parse(d["sender"]),
            receiver=NodeId.parse(d["receiver"]),
            payload=payload_type.from_dict(d["payload"]),
            sent_at=d["sent_at"],
        )
