"""SDN-enabled switch (patient cluster head) as pure-ish state transitions.

Every handler takes the switch state and returns a list of actions for the
event loop to carry out. State is mutated in place; nothing here touches the
clock, the network or the trace directly.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .flows import Drop, FlowEntry, FlowTable, ForwardTo, Hit
from .messages import Associate, AssociateAck, ControlMessage, PacketIn
from .model import (
    AppKind,
    ConfigError,
    ContractViolation,
    FlowKey,
    InvariantError,
    NodeId,
    Note,
    Packet,
    PhysiologicalReading,
    TrafficClass,
)


@dataclass
class Thresholds:
    """Normal range per application; readings outside it are emergencies."""

    ranges: dict[AppKind, tuple[float, float]]

    def __post_init__(self):
        for app, (low, high) in self.ranges.items():
            if not low < high:
                raise ConfigError(f"threshold for {app.value}: low ({low}) must be below high ({high})")

    def __getitem__(self, app: AppKind) -> tuple[float, float]:
        try:
            return self.ranges[app]
        except KeyError:
            raise ConfigError(f"no thresholds configured for {app.value}") from None


def classify(reading: PhysiologicalReading, thresholds: Thresholds) -> TrafficClass:
    low, high = thresholds[reading.app]
    if reading.value < low or reading.value > high:
        return TrafficClass.EMERGENCY
    return TrafficClass.NORMAL


# -- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class Enqueue:
    packet: Packet
    traffic_class: TrafficClass


@dataclass(frozen=True)
class SendControl:
    message: ControlMessage


@dataclass(frozen=True)
class DropPacket:
    packet: Packet
    reason: str


@dataclass(frozen=True)
class ArmTimer:
    name: str
    delay_s: float
    token: int
    key: Optional[FlowKey] = None


Action = Union[Enqueue, SendControl, DropPacket, ArmTimer, Note]


class Association(enum.Enum):
    UNASSOCIATED = "unassociated"
    ASSOCIATED = "associated"
    ORPHAN = "orphan"


@dataclass
class SwitchConfig:
    queue_capacity: int = 64
    miss_buffer_capacity: int = 16
    heartbeat_s: float = 1.0
    missed_heartbeats: int = 3
    packet_in_retry_s: float = 2.0
    packet_in_max_retries: int = 5
    associate_timeout_s: float = 0.5
    flow_table_capacity: Optional[int] = None


@dataclass
class PendingPacketIn:
    sent_at: float
    retries: int
    token: int


@dataclass
class SwitchState:
    id: NodeId
    patient: Optional[int]
    preference: list[NodeId]
    central: Optional[NodeId] = None
    config: SwitchConfig = field(default_factory=SwitchConfig)
    table: FlowTable = None
    queue_emergency: deque = field(default_factory=deque)
    queue_normal: deque = field(default_factory=deque)
    miss_buffer: dict[FlowKey, deque] = field(default_factory=dict)
    association: Association = Association.UNASSOCIATED
    controller: Optional[NodeId] = None
    pending_packet_ins: dict[FlowKey, PendingPacketIn] = field(default_factory=dict)
    last_heartbeat: float = 0.0
    last_emergency_route: Optional[ForwardTo] = None
    # association search in progress
    search_order: list[NodeId] = field(default_factory=list)
    search_index: int = 0
    liveness_token: int = 0
    associate_token: int = 0
    # conservation counters
    packets_in: int = 0
    enqueued: int = 0
    dropped_overflow: int = 0
    dropped_other: int = 0
    protocol_errors: int = 0
    token_counter: int = 0

    def __post_init__(self):
        if self.table is None:
            self.table = FlowTable(self.id, capacity=self.config.flow_table_capacity)
        if self.table.owner != self.id:
            raise ContractViolation("flow table owner must be the switch itself")

    def new_token(self) -> int:
        self.token_counter += 1
        return self.token_counter

    @property
    def buffered(self) -> int:
        return sum(len(q) for q in self.miss_buffer.values())

    def conserved(self) -> bool:
        return self.packets_in == self.enqueued + self.buffered + self.dropped_overflow + self.dropped_other

    def queue_for(self, cls: TrafficClass) -> deque:
        return self.queue_emergency if cls is TrafficClass.EMERGENCY else self.queue_normal

    def _msg(self, to: NodeId, payload, now: float) -> SendControl:
        return SendControl(ControlMessage(self.id, to, payload, now))


# -- data plane ------------------------------------------------------------

def _enqueue(st: SwitchState, pkt: Packet) -> Action:
    q = st.queue_for(pkt.traffic_class)
    if len(q) >= st.config.queue_capacity:
        st.dropped_overflow += 1
        return DropPacket(pkt, "overflow")
    q.append(pkt)
    st.enqueued += 1
    return Enqueue(pkt, pkt.traffic_class)


def _apply_entry(st: SwitchState, pkt: Packet, entry: FlowEntry) -> Action:
    if isinstance(entry.action, Drop):
        st.dropped_other += 1
        return DropPacket(pkt, "no_route")
    pkt.route = entry.action.route
    return _enqueue(st, pkt)


def _purge(st: SwitchState, now: float) -> list[Action]:
    return [
        Note("flow_expired", {"key": str(e.key), "last_matched_at": e.last_matched_at})
        for e in st.table.purge_expired(now)
    ]


def _send_packet_in(st: SwitchState, key: FlowKey, now: float, retries: int = 0) -> list[Action]:
    pkt = st.miss_buffer[key][0]
    token = st.new_token()
    st.pending_packet_ins[key] = PendingPacketIn(now, retries, token)
    return [
        st._msg(st.controller, PacketIn(pkt), now),
        ArmTimer("packet_in_retry", st.config.packet_in_retry_s, token, key),
    ]


def handle_sensor_packet(st: SwitchState, pkt: Packet, now: float) -> list[Action]:
    if pkt.src_switch != st.id:
        raise ContractViolation(f"packet {pkt.packet_id} belongs to {pkt.src_switch}, not {st.id}")
    st.packets_in += 1
    actions = _purge(st, now)
    key = pkt.flow_key
    result = st.table.lookup(key, now)
    if isinstance(result, Hit):
        actions.append(_apply_entry(st, pkt, result.entry))
        return actions

    if (
        pkt.traffic_class is TrafficClass.EMERGENCY
        and st.association is not Association.ASSOCIATED
        and st.last_emergency_route is not None
    ):
        # orphan mode: fall back to the last emergency route we were given
        pkt.route = st.last_emergency_route.route
        actions.append(_enqueue(st, pkt))
        return actions

    buf = st.miss_buffer.setdefault(key, deque())
    if len(buf) >= st.config.miss_buffer_capacity:
        st.dropped_overflow += 1
        actions.append(DropPacket(pkt, "overflow"))
        return actions
    buf.append(pkt)
    if st.association is Association.ASSOCIATED and key not in st.pending_packet_ins:
        actions.extend(_send_packet_in(st, key, now))
    return actions


def forward_transit(st: SwitchState, pkt: Packet, now: float) -> list[Action]:
    """Relay a packet from another switch along the route it already carries."""
    st.packets_in += 1
    if pkt.next_hop_from(st.id) is None:
        st.dropped_other += 1
        return [DropPacket(pkt, "no_route")]
    return [_enqueue(st, pkt)]


def dequeue_next(st: SwitchState) -> Optional[Packet]:
    if st.queue_emergency:
        return st.queue_emergency.popleft()
    if st.queue_normal:
        return st.queue_normal.popleft()
    return None


def flush(st: SwitchState) -> list[Packet]:
    """Empty every queue and buffer (node crash)."""
    out = list(st.queue_emergency) + list(st.queue_normal)
    for q in st.miss_buffer.values():
        out.extend(q)
    st.queue_emergency.clear()
    st.queue_normal.clear()
    st.miss_buffer.clear()
    st.pending_packet_ins.clear()
    return out


# -- control plane ---------------------------------------------------------

def handle_flow_mod(st: SwitchState, entry: FlowEntry, now: float) -> list[Action]:
    """Install a rule from a FlowMod or EmergencyBroadcast and drain its buffers."""
    if entry.key.src_switch != st.id:
        st.protocol_errors += 1
        return [Note("protocol_error", {"reason": "foreign_flow", "key": str(entry.key)})]
    try:
        st.table.install(entry, now)
    except InvariantError as exc:
        st.protocol_errors += 1
        return [Note("flow_rejected", {"key": str(entry.key), "reason": str(exc)})]
    if entry.key.traffic_class is TrafficClass.EMERGENCY and isinstance(entry.action, ForwardTo):
        st.last_emergency_route = entry.action
    actions: list[Action] = [Note("flow_mod_applied", {
        "key": str(entry.key),
        "action": entry.action.to_dict(),
        "priority": entry.priority,
    })]
    for key in [k for k in st.miss_buffer if entry.key.matches(k)]:
        buf = st.miss_buffer.pop(key)
        st.pending_packet_ins.pop(key, None)
        while buf:
            actions.append(_apply_entry(st, buf.popleft(), entry))
    return actions


def start(st: SwitchState, now: float) -> list[Action]:
    """Begin association with the first preferred controller."""
    order = list(st.preference)
    if st.central is not None:
        order.append(st.central)
    return _begin_search(st, order, now)


def _begin_search(st: SwitchState, order: list[NodeId], now: float) -> list[Action]:
    st.search_order = order
    st.search_index = 0
    return _try_next(st, now)


def _try_next(st: SwitchState, now: float) -> list[Action]:
    if st.search_index >= len(st.search_order):
        prior = st.association
        st.association = Association.ORPHAN
        st.associate_token = st.new_token()
        actions: list[Action] = [ArmTimer(
            "orphan_retry", st.config.missed_heartbeats * st.config.heartbeat_s, st.associate_token
        )]
        if prior is not Association.ORPHAN:
            actions.insert(0, Note("association_changed", {"from": None, "to": None, "state": "orphan"}))
        return actions
    target = st.search_order[st.search_index]
    st.associate_token = st.new_token()
    return [
        st._msg(target, Associate(st.patient), now),
        ArmTimer("associate_timeout", st.config.associate_timeout_s, st.associate_token),
    ]


def on_associate_timeout(st: SwitchState, token: int, now: float) -> list[Action]:
    if token != st.associate_token or st.association is Association.ASSOCIATED:
        return []
    st.search_index += 1
    return _try_next(st, now)


def on_orphan_retry(st: SwitchState, token: int, now: float) -> list[Action]:
    if token != st.associate_token or st.association is not Association.ORPHAN:
        return []
    return start(st, now)


def handle_associate_ack(st: SwitchState, sender: NodeId, ack: AssociateAck, now: float) -> list[Action]:
    if st.association is Association.ASSOCIATED:
        return []
    previous = st.controller if st.controller is not None else None
    st.association = Association.ASSOCIATED
    st.controller = sender
    st.associate_token = st.new_token()
    st.last_heartbeat = now
    actions: list[Action] = [Note("association_changed", {
        "from": None if previous is None else str(previous),
        "to": str(sender),
        "state": "associated",
    })]
    if ack.emergency_entry is not None:
        actions.extend(handle_flow_mod(st, ack.emergency_entry, now))
    # anything still waiting on a rule gets a fresh packet-in
    for key in sorted(st.miss_buffer, key=str):
        if st.miss_buffer[key] and key not in st.pending_packet_ins:
            actions.extend(_send_packet_in(st, key, now))
    actions.append(_arm_liveness(st))
    return actions


def _arm_liveness(st: SwitchState) -> ArmTimer:
    st.liveness_token = st.new_token()
    return ArmTimer("liveness", st.config.missed_heartbeats * st.config.heartbeat_s, st.liveness_token)


def handle_heartbeat(st: SwitchState, sender: NodeId, now: float) -> list[Action]:
    if st.association is not Association.ASSOCIATED or sender != st.controller:
        return []
    st.last_heartbeat = now
    return [_arm_liveness(st)]


def maintain_association(st: SwitchState, token: int, now: float) -> list[Action]:
    """Liveness deadline: fail over once the controller has been silent long enough.

    The deadline timer is re-armed on every heartbeat, so a token that is
    still current means ``missed_heartbeats`` intervals passed in silence.
    """
    if token != st.liveness_token or st.association is not Association.ASSOCIATED:
        return []
    silent = now - st.last_heartbeat
    if silent < st.config.missed_heartbeats * st.config.heartbeat_s:
        return []
    failed = st.controller
    st.association = Association.UNASSOCIATED
    st.pending_packet_ins.clear()
    prefs = list(st.preference)
    if failed in prefs:
        i = prefs.index(failed)
        order = prefs[i + 1:] + prefs[:i]
    else:
        order = prefs
    if st.central is not None and st.central != failed:
        order.append(st.central)
    actions: list[Action] = [Note("controller_silent", {"controller": str(failed), "silent_s": silent})]
    actions.extend(_begin_search(st, order, now))
    return actions


def on_packet_in_timeout(st: SwitchState, key: FlowKey, token: int, now: float) -> list[Action]:
    pending = st.pending_packet_ins.get(key)
    if pending is None or pending.token != token:
        return []
    if not st.miss_buffer.get(key):
        del st.pending_packet_ins[key]
        return []
    if pending.retries < st.config.packet_in_max_retries and st.association is Association.ASSOCIATED:
        return _send_packet_in(st, key, now, pending.retries + 1)
    del st.pending_packet_ins[key]
    buf = st.miss_buffer.pop(key)
    st.dropped_other += len(buf)
    return [DropPacket(p, "packet_in_timeout") for p in buf]
