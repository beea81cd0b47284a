"""Local and central controller logic.

Handlers mutate the controller state and return ``(messages, notes)``:
control messages to put on the wire and trace notes for the event loop.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .flows import (
    DEFAULT_IDLE_TIMEOUT_S,
    EMERGENCY_PRIORITY,
    NORMAL_PRIORITY,
    Drop,
    FlowEntry,
    ForwardTo,
)
from .messages import (
    AssociateAck,
    ControlMessage,
    ControllerHeartbeat,
    EmergencyBroadcast,
    FlowMod,
    HandoverNotice,
    Hello,
    LowBattery,
    PacketIn,
)
from .model import FlowKey, NodeId, NodeKind, Note, TrafficClass
from .routing import NoRoute, TopologyView, compute_route

Outcome = tuple[list[ControlMessage], list[Note]]


class Role(enum.Enum):
    LOCAL = "local"
    CENTRAL = "central"


@dataclass
class ControllerConfig:
    normal_priority: int = NORMAL_PRIORITY
    emergency_priority: int = EMERGENCY_PRIORITY
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S
    emergency_idle_timeout_s: float = math.inf
    heartbeat_s: float = 1.0
    missed_heartbeats: int = 3
    # cost given to a mobile switch's new attachment link
    uplink_cost_s: float = 0.005


@dataclass
class RegistryEntry:
    patient: Optional[int]
    associated_since: float
    position: Optional[tuple[float, float]] = None


@dataclass
class ControllerState:
    id: NodeId
    role: Role
    gateway: NodeId
    view: TopologyView
    peers: set[NodeId] = field(default_factory=set)
    config: ControllerConfig = field(default_factory=ControllerConfig)
    registry: dict[NodeId, RegistryEntry] = field(default_factory=dict)
    excluded: set[NodeId] = field(default_factory=set)
    installed: dict[tuple[NodeId, FlowKey], FlowEntry] = field(default_factory=dict)
    peer_last_seen: dict[NodeId, float] = field(default_factory=dict)
    peer_snapshots: dict[NodeId, dict] = field(default_factory=dict)
    failed_peers: set[NodeId] = field(default_factory=set)
    # switch -> flows inherited from a failed LC, claimed on re-association
    adoptable: dict[NodeId, list[FlowEntry]] = field(default_factory=dict)
    discarded: int = 0

    def msg(self, to: NodeId, payload, now: float) -> ControlMessage:
        return ControlMessage(self.id, to, payload, now)


def emergency_key(sw: NodeId) -> FlowKey:
    return FlowKey(sw, None, TrafficClass.EMERGENCY)


def _make_entry(cs: ControllerState, sw: NodeId, key: FlowKey, now: float) -> tuple[FlowEntry, list[Note]]:
    notes = []
    try:
        route = compute_route(cs.view, sw, cs.gateway, cs.excluded)
        action = ForwardTo(route[1], tuple(route))
    except NoRoute:
        action = Drop()
        notes.append(Note("routed_unreachable", {"switch": str(sw), "key": str(key)}))
    if key.traffic_class is TrafficClass.EMERGENCY:
        prio, timeout = cs.config.emergency_priority, cs.config.emergency_idle_timeout_s
    else:
        prio, timeout = cs.config.normal_priority, cs.config.idle_timeout_s
    entry = FlowEntry(key, action, prio, timeout, installed_at=now, last_matched_at=now)
    cs.installed[(sw, key)] = entry
    return entry, notes


def handle_packet_in(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    sw = msg.sender
    pin: PacketIn = msg.payload
    if sw not in cs.registry:
        cs.discarded += 1
        return [], [Note("packet_in_discarded", {"switch": str(sw), "reason": "unregistered"})]
    pkt = pin.packet
    if pkt.traffic_class is TrafficClass.EMERGENCY:
        key = emergency_key(sw)
    else:
        key = FlowKey(sw, pkt.app, TrafficClass.NORMAL)
    entry, notes = _make_entry(cs, sw, key, now)
    messages = [cs.msg(sw, FlowMod(entry), now)]
    if key.traffic_class is TrafficClass.EMERGENCY:
        targets = sorted(cs.registry)
        for target in targets:
            e, n = _make_entry(cs, target, emergency_key(target), now)
            notes.extend(n)
            messages.append(cs.msg(target, EmergencyBroadcast(e), now))
        notes.append(Note("emergency_broadcast_issued", {
            "trigger": str(sw), "targets": [str(t) for t in targets],
        }))
    return messages, notes


def _intermediates(entry: FlowEntry) -> tuple[NodeId, ...]:
    route = entry.route
    return route[1:-1] if route else ()


def _reroute(cs: ControllerState, affected: Callable[[FlowEntry], bool], now: float) -> Outcome:
    messages: list[ControlMessage] = []
    notes: list[Note] = []
    for (sw, key) in sorted(cs.installed, key=lambda k: (k[0].sort_key(), str(k[1]))):
        old = cs.installed[(sw, key)]
        if not affected(old):
            continue
        new, n = _make_entry(cs, sw, key, now)
        notes.extend(n)
        if new.action == old.action:
            cs.installed[(sw, key)] = old
            continue
        messages.append(cs.msg(sw, FlowMod(new), now))
        notes.append(Note("flow_rerouted", {
            "switch": str(sw),
            "key": str(key),
            "old": [str(x) for x in old.route] if old.route else None,
            "new": [str(x) for x in new.route] if new.route else None,
        }))
    return messages, notes


def _relay_to_peers(cs: ControllerState, payload, now: float) -> list[ControlMessage]:
    return [cs.msg(p, payload, now) for p in sorted(cs.peers) if p not in cs.failed_peers]


def handle_low_battery(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    lb: LowBattery = msg.payload
    node = lb.node
    if node.kind is NodeKind.GATEWAY or node == cs.gateway:
        return [], [Note("low_battery_ignored", {"node": str(node)})]
    notes = []
    if node not in cs.excluded:
        cs.excluded.add(node)
        notes.append(Note("node_excluded", {"node": str(node), "battery_j": lb.battery_j}))
    messages, n = _reroute(cs, lambda e: node in _intermediates(e), now)
    notes.extend(n)
    if not lb.relayed:
        messages.extend(_relay_to_peers(cs, LowBattery(node, lb.battery_j, relayed=True), now))
    return messages, notes


def handle_handover(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    notice: HandoverNotice = msg.payload
    sw = notice.switch
    if not notice.relayed and sw not in cs.registry:
        cs.discarded += 1
        return [], [Note("handover_discarded", {"switch": str(sw)})]
    if sw in cs.registry:
        cs.registry[sw].position = tuple(notice.position)
    if notice.old_attachment is not None:
        cs.view.remove_link(sw, notice.old_attachment)
    cs.view.add_link(sw, notice.new_attachment, cs.config.uplink_cost_s)
    messages, notes = _reroute(cs, lambda e: True, now)
    notes.append(Note("handover_applied", {
        "switch": str(sw),
        "from": None if notice.old_attachment is None else str(notice.old_attachment),
        "to": str(notice.new_attachment),
        "flow_mods": len(messages),
    }))
    if not notice.relayed:
        messages.extend(_relay_to_peers(cs, HandoverNotice(
            sw, notice.old_attachment, notice.new_attachment, notice.position, relayed=True
        ), now))
    return messages, notes


def handle_associate(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    sw = msg.sender
    notes = []
    prior = cs.registry.get(sw)
    cs.registry[sw] = RegistryEntry(msg.payload.patient, now, prior.position if prior else None)
    inherited = cs.adoptable.pop(sw, None)
    if inherited is None:
        inherited = _flows_from_snapshots(cs, sw)
    if inherited:
        for e in inherited:
            cs.installed.setdefault((sw, e.key), e)
        notes.append(Note("switch_adopted", {"switch": str(sw), "flows": len(inherited)}))
    entry, n = _make_entry(cs, sw, emergency_key(sw), now)
    notes.extend(n)
    notes.append(Note("switch_registered", {"switch": str(sw), "patient": msg.payload.patient}))
    return [cs.msg(sw, AssociateAck(entry), now)], notes


def _flows_from_snapshots(cs: ControllerState, sw: NodeId) -> list[FlowEntry]:
    best, since = None, -math.inf
    for snap in cs.peer_snapshots.values():
        reg = snap.get("registry", {}).get(str(sw))
        if reg is not None and reg["associated_since"] > since:
            best, since = snap, reg["associated_since"]
    if best is None:
        return []
    return [FlowEntry.from_dict(d) for d in best["flows"].get(str(sw), [])]


def snapshot(cs: ControllerState) -> dict:
    flows: dict[str, list] = {}
    for (sw, _key), e in sorted(cs.installed.items(), key=lambda kv: (kv[0][0].sort_key(), str(kv[0][1]))):
        flows.setdefault(str(sw), []).append(e.to_dict())
    return {
        "registry": {
            str(sw): {"patient": r.patient, "associated_since": r.associated_since}
            for sw, r in sorted(cs.registry.items())
        },
        "flows": flows,
    }


def heartbeat_messages(cs: ControllerState, now: float) -> list[ControlMessage]:
    out = [cs.msg(sw, ControllerHeartbeat(), now) for sw in sorted(cs.registry)]
    if cs.peers:
        snap = snapshot(cs)
        out.extend(cs.msg(p, ControllerHeartbeat(snap), now) for p in sorted(cs.peers))
    return out


def handle_peer_heartbeat(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    peer = msg.sender
    notes = []
    cs.peer_last_seen[peer] = now
    if peer in cs.failed_peers:
        cs.failed_peers.discard(peer)
        notes.append(Note("peer_recovered", {"peer": str(peer)}))
    snap = msg.payload.snapshot or {"registry": {}, "flows": {}}
    cs.peer_snapshots[peer] = snap
    # a switch that moved to the peer more recently is no longer ours
    for name, reg in snap["registry"].items():
        sw = NodeId.parse(name)
        mine = cs.registry.get(sw)
        if mine is not None and reg["associated_since"] > mine.associated_since:
            del cs.registry[sw]
            for k in [k for k in cs.installed if k[0] == sw]:
                del cs.installed[k]
            notes.append(Note("registry_released", {"switch": name, "to": str(peer)}))
    return [], notes


def handle_hello(cs: ControllerState, msg: ControlMessage, now: float) -> Outcome:
    """A restarted peer announces itself with an empty registry."""
    peer = msg.sender
    cs.peers.add(peer)
    cs.peer_last_seen[peer] = now
    cs.peer_snapshots[peer] = {"registry": {}, "flows": {}}
    notes = []
    if peer in cs.failed_peers:
        cs.failed_peers.discard(peer)
        notes.append(Note("peer_recovered", {"peer": str(peer)}))
    return [], notes


def hello_messages(cs: ControllerState, now: float) -> list[ControlMessage]:
    return [cs.msg(p, Hello(), now) for p in sorted(cs.peers)]


def _designated(cs: ControllerState, failed: NodeId) -> bool:
    survivors = [
        p for p in cs.peers | {cs.id}
        if p.kind is NodeKind.LOCAL_CONTROLLER and p != failed and p not in cs.failed_peers
    ]
    if survivors:
        return cs.id == min(survivors)
    return cs.role is Role.CENTRAL


def check_peers(cs: ControllerState, now: float) -> Outcome:
    """Declare peers silent for ``missed_heartbeats`` intervals failed."""
    messages: list[ControlMessage] = []
    notes: list[Note] = []
    limit = cs.config.missed_heartbeats * cs.config.heartbeat_s
    for peer in sorted(cs.peers):
        if peer in cs.failed_peers:
            continue
        if now - cs.peer_last_seen.get(peer, 0.0) >= limit:
            cs.failed_peers.add(peer)
            if peer.kind is NodeKind.LOCAL_CONTROLLER and _designated(cs, peer):
                m, n = takeover(cs, peer, now)
                messages.extend(m)
                notes.extend(n)
            else:
                notes.append(Note("peer_failed", {"peer": str(peer)}))
    return messages, notes


def takeover(cs: ControllerState, failed_lc: NodeId, now: float) -> Outcome:
    """Prepare to adopt the switches of a failed LC from its last replica.

    Switches find their way here on their own Associate requests; nothing is
    pushed to them. The replica is whatever the failed LC last shipped on its
    heartbeats over the wired interconnect.
    """
    cs.failed_peers.add(failed_lc)
    snap = cs.peer_snapshots.get(failed_lc, {"registry": {}, "flows": {}})
    switches = sorted(NodeId.parse(s) for s in snap["registry"])
    for sw in switches:
        cs.adoptable[sw] = [FlowEntry.from_dict(d) for d in snap["flows"].get(str(sw), [])]
    return [], [Note("takeover", {"failed": str(failed_lc), "switches": [str(s) for s in switches]})]
