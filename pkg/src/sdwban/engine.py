"""Discrete-event simulation of the whole SDN-managed body-area network.

The loop is single-threaded and fully deterministic: every random draw comes
from a named stream derived from the scenario seed, and simultaneous events
run in insertion order.
"""

from __future__ import annotations

import copy
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Optional

from . import controller as ctl
from . import switch as swm
from .events import Event, EventKind, EventQueue
from .links import Frame, LinkKind, LinkModel, link_stream, transmit
from .messages import (
    Associate,
    AssociateAck,
    ControlMessage,
    ControllerHeartbeat,
    EmergencyBroadcast,
    FlowMod,
    HandoverNotice,
    Hello,
    LowBattery,
    PacketIn,
    Variant,
)
from .mobility import mobility_step
from .model import InvariantError, NodeId, NodeKind, Note, Packet, PacketFactory, SdwbanError
from .scenario import Scenario
from .sensors import EnergyKind, next_reading, sensor_stream, spend_energy
from .trace import Trace

log = logging.getLogger(__name__)


class InternalError(SdwbanError):
    """The simulator broke one of its own invariants."""


CONTROL_EVENTS = {
    Variant.HELLO: "hello_sent",
    Variant.ASSOCIATE: "associate_sent",
    Variant.ASSOCIATE_ACK: "associate_ack_sent",
    Variant.PACKET_IN: "packet_in_sent",
    Variant.FLOW_MOD: "flow_mod_sent",
    Variant.EMERGENCY_BROADCAST: "emergency_broadcast",
    Variant.LOW_BATTERY: "low_battery_sent",
    Variant.HANDOVER_NOTICE: "handover_notice",
    Variant.CONTROLLER_HEARTBEAT: "heartbeat",
}


@dataclass(frozen=True)
class Timer:
    name: str
    node: NodeId
    incarnation: int = 0
    token: int = 0
    key: object = None
    value: Optional[float] = None


class Simulation:
    def __init__(self, scenario: Scenario, observer: Optional[Callable[["Simulation", Event], None]] = None):
        sc = scenario
        self.sc = sc
        self.topo = sc.topology.copy()
        self.timers = sc.timers
        self.queue = EventQueue()
        self.trace = Trace()
        self.observer = observer
        self.now = 0.0
        self.horizon = sc.duration_s + sc.timers.drain_s

        self.sensors = {s.id: copy.deepcopy(s) for s in sc.sensors}
        self.sensor_rngs = {sid: sensor_stream(sc.seed, sid) for sid in sorted(self.sensors)}
        self.sample_index = {sid: 0 for sid in self.sensors}
        self.body_links = {
            sid: LinkModel.between(sid, s.switch, LinkKind.BODY, self.topo.link_defaults[LinkKind.BODY])
            for sid, s in self.sensors.items()
        }
        self.link_rngs: dict[tuple[NodeId, NodeId], object] = {}

        self.alive: dict[NodeId, bool] = {n: True for n in self.topo.nodes()}
        self.alive.update({sid: True for sid in self.sensors})
        self.incarnation: dict[NodeId, int] = defaultdict(int)
        self.batteries = {sw: sc.energy_for(sw).battery() for sw in self.topo.all_switches}
        self.tx_cost = {sw: sc.energy_for(sw).tx_cost_j for sw in self.topo.all_switches}
        self.switches = {sw: self._new_switch(sw) for sw in self.topo.all_switches}
        self.controllers: dict[NodeId, Optional[ctl.ControllerState]] = {
            c: self._new_controller(c) for c in self.topo.controllers
        }
        self.busy = {sw: False for sw in self.topo.all_switches}
        self.pending_reports: dict[NodeId, list] = defaultdict(list)

        self.factory = PacketFactory(
            {s.id: (s.app, s.switch) for s in sc.sensors},
            lambda r: swm.classify(r, sc.thresholds),
            sc.size_bits,
        )
        self.in_flight: dict[int, Packet] = {}
        self.generated = 0
        self.outcomes: Counter = Counter()

    # -- construction -----------------------------------------------------

    def _new_switch(self, sw: NodeId) -> swm.SwitchState:
        t, c = self.timers, self.sc.capacities
        cfg = swm.SwitchConfig(
            queue_capacity=c.queue,
            miss_buffer_capacity=c.miss_buffer,
            heartbeat_s=t.heartbeat_s,
            missed_heartbeats=t.missed_heartbeats,
            packet_in_retry_s=t.packet_in_retry_s,
            packet_in_max_retries=t.packet_in_max_retries,
            associate_timeout_s=t.associate_timeout_s,
            flow_table_capacity=c.flow_table,
        )
        return swm.SwitchState(
            id=sw,
            patient=self.topo.patient_of(sw),
            preference=list(self.topo.lc_preference.get(sw, [])),
            central=self.topo.central,
            config=cfg,
        )

    def _new_controller(self, c: NodeId) -> ctl.ControllerState:
        t = self.timers
        cfg = ctl.ControllerConfig(
            idle_timeout_s=t.idle_timeout_s,
            emergency_idle_timeout_s=t.emergency_idle_timeout_s,
            heartbeat_s=t.heartbeat_s,
            missed_heartbeats=t.missed_heartbeats,
            uplink_cost_s=max(self.topo.link_defaults[LinkKind.UPLINK].base_latency_s, 1e-9),
        )
        role = ctl.Role.CENTRAL if c.kind is NodeKind.CENTRAL_CONTROLLER else ctl.Role.LOCAL
        cs = ctl.ControllerState(
            id=c,
            role=role,
            gateway=self.topo.gateway,
            view=self.topo.initial_view(),
            peers={p for p in self.topo.controllers if p != c},
            config=cfg,
        )
        for p in cs.peers:
            cs.peer_last_seen[p] = self.now
        return cs

    # -- helpers ----------------------------------------------------------

    def emit(self, node, event: str, /, **fields) -> None:
        self.trace.emit(self.now, node, event, fields)

    def up(self, node: NodeId) -> bool:
        if not self.alive.get(node, False):
            return False
        if node in self.batteries and self.batteries[node].dead:
            return False
        return True

    def _rng(self, a: NodeId, b: NodeId):
        key = (a, b)
        rng = self.link_rngs.get(key)
        if rng is None:
            rng = self.link_rngs[key] = link_stream(self.sc.seed, a, b)
        return rng

    def _schedule_timer(self, delay: float, timer: Timer) -> None:
        self.queue.schedule(self.now + delay, EventKind.TIMER_FIRE, timer)

    # -- main loop --------------------------------------------------------

    def run(self) -> Trace:
        self._bootstrap()
        while self.queue:
            at = self.queue.peek_time()
            if at > self.horizon:
                break
            if at > self.sc.duration_s and not self.in_flight:
                break
            ev = self.queue.pop()
            self.now = ev.at
            self._dispatch(ev)
            if self.observer is not None:
                self.observer(self, ev)
        self._finish()
        return self.trace

    def _bootstrap(self) -> None:
        topo = self.topo
        self.emit("sim", "run_start", scenario=self.sc.name, seed=self.sc.seed,
                  duration_s=self.sc.duration_s, n_patients=topo.n_patients,
                  j_controllers=topo.j_controllers)
        for c in topo.controllers:
            self._schedule_timer(self.timers.heartbeat_s, Timer("heartbeat", c))
        for sw in topo.all_switches:
            self._apply_switch(sw, swm.start(self.switches[sw], self.now))
        for sid in sorted(self.sensors):
            sm = self.sensors[sid]
            if sm.phase_s is None:
                sm.phase_s = self.sensor_rngs[sid].uniform(0.0, sm.period_s)
            if sm.phase_s <= self.sc.duration_s:
                self.queue.schedule(sm.phase_s, EventKind.SENSOR_SAMPLE, sid)
        for sw in sorted(topo.mobility):
            if self.timers.mobility_step_s <= self.sc.duration_s:
                self.queue.schedule(self.timers.mobility_step_s, EventKind.MOBILITY_STEP, sw)
        for f in self.sc.fault_plan:
            if f.action == "crash":
                self.queue.schedule(f.t, EventKind.NODE_CRASH, f.node)
            elif f.action == "recover":
                self.queue.schedule(f.t, EventKind.NODE_RECOVER, f.node)
            else:
                self.queue.schedule(f.t, EventKind.TIMER_FIRE, Timer("battery", f.node, value=f.battery_j))

    def _dispatch(self, ev: Event) -> None:
        k = ev.kind
        if k is EventKind.SENSOR_SAMPLE:
            self._on_sample(ev.payload)
        elif k is EventKind.FRAME_ARRIVAL:
            self._on_arrival(ev.payload)
        elif k is EventKind.FRAME_LOSS:
            self._on_loss(ev.payload)
        elif k is EventKind.TIMER_FIRE:
            self._on_timer(ev.payload)
        elif k is EventKind.MOBILITY_STEP:
            self._on_mobility(ev.payload)
        elif k is EventKind.NODE_CRASH:
            self._crash(ev.payload)
        elif k is EventKind.NODE_RECOVER:
            self._recover(ev.payload)
        else:  # pragma: no cover
            raise InternalError(f"unknown event kind {k}")

    def _finish(self) -> None:
        residual = sorted(self.in_flight)
        energy = {}
        for sid in sorted(self.sensors):
            energy[str(sid)] = self.sensors[sid].battery.consumed_j
        for sw in sorted(self.batteries):
            energy[str(sw)] = self.batteries[sw].consumed_j
        dead = sorted(
            [str(s) for s, m in self.sensors.items() if m.battery.dead]
            + [str(sw) for sw, b in self.batteries.items() if b.dead]
        )
        terminal = sum(self.outcomes.values())
        self.emit("sim", "run_end", generated=self.generated, residual_in_flight=residual,
                  outcomes=dict(sorted(self.outcomes.items())), energy_j=energy, nodes_dead=dead,
                  end_time=self.now)
        if self.generated != terminal + len(residual):
            raise InternalError(
                f"conservation broken: generated {self.generated} != terminal {terminal} + in flight {len(residual)}"
            )

    # -- data plane -------------------------------------------------------

    def _on_sample(self, sid: NodeId) -> None:
        sm = self.sensors[sid]
        if self.alive[sid]:
            reading = next_reading(sm, self.now, self.sensor_rngs[sid])
            pkt = self.factory.new_packet(sid, reading, self.now)
            self.generated += 1
            self.emit(sid, "sample_emitted", packet_id=pkt.packet_id, app=pkt.app.value,
                      **{"class": pkt.traffic_class.value}, value=reading.value, switch=str(sm.switch))
            events = spend_energy(sm, EnergyKind.SAMPLE)
            tx = spend_energy(sm, EnergyKind.TRANSMIT)
            self._sensor_battery_events(sm, events + [e for e in tx if e != "send_suppressed"])
            if "send_suppressed" in tx:
                self.outcomes["dead_battery"] += 1
                self.emit(sid, "send_suppressed", packet_id=pkt.packet_id,
                          **{"class": pkt.traffic_class.value}, reason="dead_battery")
            else:
                self.in_flight[pkt.packet_id] = pkt
                self._send_data(sid, sm.switch, pkt, self.body_links[sid])
        self.sample_index[sid] += 1
        nxt = sm.phase_s + self.sample_index[sid] * sm.period_s
        if nxt <= self.sc.duration_s:
            self.queue.schedule(nxt, EventKind.SENSOR_SAMPLE, sid)

    def _send_data(self, src: NodeId, dst: NodeId, pkt: Packet, link: LinkModel) -> None:
        frame = Frame(src, dst, link.kind, pkt, self.now)
        transmit(link, frame, self.now, self._rng(src, dst), self.queue, alive=self.up(dst))

    def _on_arrival(self, frame: Frame) -> None:
        if isinstance(frame.body, ControlMessage):
            self._on_control(frame)
            return
        pkt: Packet = frame.body
        dst = frame.dst
        if not self.up(dst):
            self._drop(pkt, dst, "endpoint_down")
            return
        try:
            pkt.visit(dst)
        except InvariantError as exc:
            raise InternalError(str(exc)) from None
        if dst.kind is NodeKind.SWITCH:
            st = self.switches[dst]
            if frame.src.kind is NodeKind.SENSOR:
                actions = swm.handle_sensor_packet(st, pkt, self.now)
            else:
                actions = swm.forward_transit(st, pkt, self.now)
            self._apply_switch(dst, actions)
        elif dst.kind is NodeKind.GATEWAY:
            self._send_data(dst, self.topo.cloud, pkt, self.topo.backhaul())
        elif dst.kind is NodeKind.CLOUD:
            del self.in_flight[pkt.packet_id]
            self.outcomes["delivered"] += 1
            self.emit(dst, "delivered", packet_id=pkt.packet_id, app=pkt.app.value,
                      **{"class": pkt.traffic_class.value}, created_at=pkt.created_at,
                      latency=self.now - pkt.created_at, hops=[str(n) for n in pkt.hop_trace])
        else:
            raise InternalError(f"data frame delivered to {dst}")

    def _on_loss(self, frame: Frame) -> None:
        if isinstance(frame.body, ControlMessage):
            self.emit(frame.src, "control_lost", variant=frame.body.variant.value,
                      to=str(frame.dst), reason=frame.reason)
            return
        self._drop(frame.body, frame.src, frame.reason, to=str(frame.dst))

    def _drop(self, pkt: Packet, node: NodeId, reason: str, **extra) -> None:
        if self.in_flight.pop(pkt.packet_id, None) is None:
            raise InternalError(f"packet {pkt.packet_id} dropped twice or never sent")
        self.outcomes[reason] += 1
        self.emit(node, "drop", packet_id=pkt.packet_id, app=pkt.app.value,
                  **{"class": pkt.traffic_class.value}, reason=reason, **extra)

    def _kick(self, sw: NodeId) -> None:
        """Start the next transmission on ``sw``'s uplink radio if it is idle."""
        if self.busy[sw] or not self.up(sw):
            return
        st = self.switches[sw]
        while True:
            pkt = swm.dequeue_next(st)
            if pkt is None:
                return
            nxt = pkt.next_hop_from(sw)
            if nxt is None:
                self._drop(pkt, sw, "no_route")
                continue
            link = self.topo.data_link(sw, nxt)
            if link is None:
                self._drop(pkt, sw, "out_of_range", to=str(nxt))
                continue
            tx_s = link.serialization_s(pkt.size_bits)
            self.emit(sw, "dequeue", packet_id=pkt.packet_id, **{"class": pkt.traffic_class.value},
                      to=str(nxt), tx_s=tx_s)
            self.busy[sw] = True
            self._schedule_timer(tx_s, Timer("tx_done", sw, self.incarnation[sw]))
            self._send_data(sw, nxt, pkt, link)
            self._switch_battery_events(sw, self.batteries[sw].spend(self.tx_cost[sw]))
            return

    # -- switch glue ------------------------------------------------------

    def _apply_switch(self, sw: NodeId, actions: list) -> None:
        for a in actions:
            if isinstance(a, swm.Enqueue):
                st = self.switches[sw]
                self.emit(sw, "enqueue", packet_id=a.packet.packet_id, **{"class": a.traffic_class.value},
                          qlen=len(st.queue_for(a.traffic_class)))
            elif isinstance(a, swm.SendControl):
                self._send_control(a.message)
            elif isinstance(a, swm.DropPacket):
                self._drop(a.packet, sw, a.reason)
            elif isinstance(a, swm.ArmTimer):
                self._schedule_timer(a.delay_s, Timer(a.name, sw, self.incarnation[sw], a.token, a.key))
            elif isinstance(a, Note):
                self.emit(sw, a.event, **a.fields)
                if a.event == "association_changed" and a.fields.get("state") == "associated":
                    self._flush_reports(sw)
            else:  # pragma: no cover
                raise InternalError(f"unknown switch action {a!r}")
        self._kick(sw)

    def _report(self, sw: NodeId, payload) -> None:
        st = self.switches[sw]
        if st.association is swm.Association.ASSOCIATED and self.up(sw):
            self._send_control(ControlMessage(sw, st.controller, payload, self.now))
        else:
            self.pending_reports[sw].append(payload)

    def _flush_reports(self, sw: NodeId) -> None:
        pending, self.pending_reports[sw] = self.pending_reports[sw], []
        for payload in pending:
            self._report(sw, payload)

    def _send_control(self, msg: ControlMessage) -> None:
        if not self.up(msg.sender):
            return
        msg = ControlMessage(msg.sender, msg.receiver, msg.payload, self.now)
        link = self.topo.control_link(msg.sender, msg.receiver)
        self.emit(msg.sender, CONTROL_EVENTS[msg.variant], to=str(msg.receiver), bits=msg.size_bits,
                  **_control_fields(msg))
        frame = Frame(msg.sender, msg.receiver, link.kind, msg, self.now)
        transmit(link, frame, self.now, self._rng(msg.sender, msg.receiver), self.queue,
                 in_range=self.topo.in_range(msg.sender, msg.receiver, link.kind),
                 alive=self.up(msg.receiver))

    def _on_control(self, frame: Frame) -> None:
        msg: ControlMessage = frame.body
        dst = msg.receiver
        if not self.up(dst):
            self.emit(frame.src, "control_lost", variant=msg.variant.value, to=str(dst), reason="endpoint_down")
            return
        p = msg.payload
        if dst.kind is NodeKind.SWITCH:
            st = self.switches[dst]
            if isinstance(p, AssociateAck):
                actions = swm.handle_associate_ack(st, msg.sender, p, self.now)
            elif isinstance(p, (FlowMod, EmergencyBroadcast)):
                actions = swm.handle_flow_mod(st, p.entry, self.now)
            elif isinstance(p, ControllerHeartbeat):
                actions = swm.handle_heartbeat(st, msg.sender, self.now)
            else:
                st.protocol_errors += 1
                actions = [Note("protocol_error", {"reason": f"unexpected {msg.variant.value}"})]
            self._apply_switch(dst, actions)
            return
        cs = self.controllers[dst]
        if isinstance(p, Associate):
            out = ctl.handle_associate(cs, msg, self.now)
        elif isinstance(p, PacketIn):
            out = ctl.handle_packet_in(cs, msg, self.now)
        elif isinstance(p, LowBattery):
            out = ctl.handle_low_battery(cs, msg, self.now)
        elif isinstance(p, HandoverNotice):
            out = ctl.handle_handover(cs, msg, self.now)
        elif isinstance(p, ControllerHeartbeat):
            out = ctl.handle_peer_heartbeat(cs, msg, self.now)
        elif isinstance(p, Hello):
            out = ctl.handle_hello(cs, msg, self.now)
        else:
            out = ([], [Note("protocol_error", {"reason": f"unexpected {msg.variant.value}"})])
        self._apply_controller(dst, out)

    def _apply_controller(self, c: NodeId, out: ctl.Outcome) -> None:
        messages, notes = out
        for n in notes:
            self.emit(c, n.event, **n.fields)
        for m in messages:
            self._send_control(m)

    # -- timers, batteries, faults, mobility --------------------------------

    def _on_timer(self, t: Timer) -> None:
        if t.name == "battery":
            self._set_battery(t.node, t.value)
            return
        if t.incarnation != self.incarnation[t.node] or not self.up(t.node):
            return
        if t.name == "heartbeat":
            cs = self.controllers[t.node]
            for m in ctl.heartbeat_messages(cs, self.now):
                self._send_control(m)
            self._apply_controller(t.node, ctl.check_peers(cs, self.now))
            self._schedule_timer(self.timers.heartbeat_s, Timer("heartbeat", t.node, t.incarnation))
            return
        if t.name == "tx_done":
            self.busy[t.node] = False
            self._kick(t.node)
            return
        st = self.switches[t.node]
        if t.name == "liveness":
            actions = swm.maintain_association(st, t.token, self.now)
        elif t.name == "associate_timeout":
            actions = swm.on_associate_timeout(st, t.token, self.now)
        elif t.name == "orphan_retry":
            actions = swm.on_orphan_retry(st, t.token, self.now)
        elif t.name == "packet_in_retry":
            actions = swm.on_packet_in_timeout(st, t.key, t.token, self.now)
        else:
            raise InternalError(f"unknown timer {t.name}")
        self._apply_switch(t.node, actions)

    def _set_battery(self, node: NodeId, level: float) -> None:
        if node.kind is NodeKind.SENSOR:
            sm = self.sensors[node]
            self.emit(node, "battery_drained", level_j=level)
            self._sensor_battery_events(sm, sm.battery.drain_to(level))
        else:
            self.emit(node, "battery_drained", level_j=level)
            self._switch_battery_events(node, self.batteries[node].drain_to(level))

    def _sensor_battery_events(self, sm, events: list[str]) -> None:
        for e in events:
            if e == "low_battery":
                self.emit(sm.id, "low_battery", battery_j=sm.battery.level_j)
                self._report(sm.switch, LowBattery(sm.id, sm.battery.level_j))
            elif e == "node_dead":
                self.emit(sm.id, "node_dead", reason="battery")

    def _switch_battery_events(self, sw: NodeId, events: list[str]) -> None:
        bat = self.batteries[sw]
        for e in events:
            if e == "low_battery":
                self.emit(sw, "low_battery", battery_j=bat.level_j)
                self._report(sw, LowBattery(sw, bat.level_j))
            elif e == "node_dead":
                self.emit(sw, "node_dead", reason="battery")
                self._node_down(sw, "dead_battery")

    def _node_down(self, node: NodeId, reason: str) -> None:
        if node.kind is NodeKind.SWITCH:
            for pkt in swm.flush(self.switches[node]):
                self._drop(pkt, node, reason)
            self.busy[node] = False

    def _crash(self, node: NodeId) -> None:
        if not self.alive.get(node, False):
            return
        self.alive[node] = False
        self.incarnation[node] += 1
        self.emit(node, "node_crash")
        self._node_down(node, "node_crash")
        if node in self.controllers:
            self.controllers[node] = None

    def _recover(self, node: NodeId) -> None:
        if self.alive.get(node, True):
            return
        self.alive[node] = True
        self.incarnation[node] += 1
        self.emit(node, "node_recover")
        if node.kind is NodeKind.SWITCH:
            self.switches[node] = self._new_switch(node)
            self.busy[node] = False
            self._apply_switch(node, swm.start(self.switches[node], self.now))
        elif node in self.controllers:
            cs = self.controllers[node] = self._new_controller(node)
            for m in ctl.hello_messages(cs, self.now):
                self._send_control(m)
            self._schedule_timer(self.timers.heartbeat_s, Timer("heartbeat", node, self.incarnation[node]))

    def _on_mobility(self, sw: NodeId) -> None:
        pos, handovers = mobility_step(self.topo, sw, self.now)
        for ho in handovers:
            self.emit(sw, "handover_detected", **{"from": None if ho.old is None else str(ho.old)},
                      to=str(ho.new), position=list(pos))
            if self.up(sw):
                self._report(sw, HandoverNotice(sw, ho.old, ho.new, pos))
        nxt = self.now + self.timers.mobility_step_s
        if nxt <= self.sc.duration_s:
            self.queue.schedule(nxt, EventKind.MOBILITY_STEP, sw)


def _control_fields(msg: ControlMessage) -> dict:
    p = msg.payload
    if isinstance(p, PacketIn):
        key = p.packet.flow_key
        return {"key": str(key), "packet_id": p.packet.packet_id}
    if isinstance(p, (FlowMod, EmergencyBroadcast)):
        return {"key": str(p.entry.key), "action": p.entry.action.to_dict()}
    if isinstance(p, Associate):
        return {"patient": p.patient}
    if isinstance(p, AssociateAck):
        return {"emergency_route": p.emergency_entry.action.to_dict() if p.emergency_entry else None}
    if isinstance(p, LowBattery):
        return {"node": str(p.node), "relayed": p.relayed}
    if isinstance(p, HandoverNotice):
        return {"switch": str(p.switch), "relayed": p.relayed,
                "from": None if p.old_attachment is None else str(p.old_attachment),
                "new": str(p.new_attachment)}
    if isinstance(p, ControllerHeartbeat):
        return {"peer": p.snapshot is not None}
    return {}


def run(scenario: Scenario, observer=None):
    """Execute ``scenario`` and return ``(trace, metrics)``."""
    from .metrics import summarize

    sim = Simulation(scenario, observer)
    trace = sim.run()
    return trace, summarize(trace.records)
