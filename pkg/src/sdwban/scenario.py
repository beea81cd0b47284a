"""Scenario documents: YAML schema, validation, defaults, overrides."""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .links import DEFAULT_LINKS, LinkKind, LinkModel, LinkParams
from .mobility import MobilityPlan, random_waypoint_plan
from .model import AppKind, ConfigError, NodeId, NodeKind, sensor, switch
from .sensors import APP_PROFILES, Battery, SensorModel
from .switch import Thresholds
from .topology import DEFAULT_RANGES, Topology

SCHEMA_VERSION = 1


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LinkParamsDoc(_Doc):
    latency_s: Optional[float] = Field(None, ge=0)
    bandwidth_bps: Optional[float] = Field(None, gt=0)
    loss_prob: Optional[float] = Field(None, ge=0, le=1)


class DataLinkDoc(LinkParamsDoc):
    a: str
    b: str


class TopologyDoc(_Doc):
    n_patients: int = Field(ge=1)
    j_controllers: int = Field(ge=1)
    relays: int = Field(0, ge=0)
    central_controller: bool = True
    floor_plan: tuple[float, float] = (100.0, 100.0)
    radio_range_m: dict[Literal["body", "uplink", "control"], float] = {}
    positions: dict[str, tuple[float, float]] = {}
    links: Optional[list[DataLinkDoc]] = None
    lc_preference: dict[str, list[str]] = {}


class RangeDoc(_Doc):
    low: float
    high: float


class EpisodeDoc(_Doc):
    start_s: float
    end_s: float
    value: float

    @field_validator("end_s")
    @classmethod
    def _ordered(cls, v, info):
        if "start_s" in info.data and v <= info.data["start_s"]:
            raise ValueError("end_s must be after start_s")
        return v


# Device vendors name the same measurement differently; map them onto AppKind.
APP_ALIASES = {
    "heartrate": AppKind.HEART_RATE,
    "hr": AppKind.HEART_RATE,
    "pulse": AppKind.HEART_RATE,
    "temp": AppKind.TEMPERATURE,
    "glucometer": AppKind.GLUCOSE,
    "bloodpressure": AppKind.BLOOD_PRESSURE,
    "bp": AppKind.BLOOD_PRESSURE,
    "ekg": AppKind.ECG,
}


def normalize_app(name):
    if isinstance(name, AppKind) or not isinstance(name, str):
        return name
    flat = name.strip().lower().replace("-", "_").replace(" ", "_")
    if flat in {a.value for a in AppKind}:
        return AppKind(flat)
    return APP_ALIASES.get(flat.replace("_", ""), name)


class SensorDoc(_Doc):
    patient: int = Field(ge=0)
    app: AppKind
    period_s: Optional[float] = Field(None, gt=0)
    phase_s: Optional[float] = Field(None, ge=0)
    baseline: Optional[float] = None
    jitter_stddev: Optional[float] = Field(None, ge=0)
    episodes: list[EpisodeDoc] = []
    battery_j: float = Field(100.0, ge=0)
    tx_cost_j: float = Field(0.001, ge=0)
    sample_cost_j: float = Field(0.0005, ge=0)
    low_battery_fraction: float = Field(0.1, gt=0, lt=1)

    @field_validator("app", mode="before")
    @classmethod
    def _app(cls, v):
        return normalize_app(v)


class CapacitiesDoc(_Doc):
    queue: int = Field(64, ge=1)
    miss_buffer: int = Field(16, ge=1)
    flow_table: Optional[int] = Field(None, ge=1)


class TimersDoc(_Doc):
    heartbeat_s: float = Field(1.0, gt=0)
    missed_heartbeats: int = Field(3, ge=1)
    packet_in_retry_s: float = Field(2.0, gt=0)
    packet_in_max_retries: int = Field(5, ge=0)
    idle_timeout_s: float = Field(30.0, gt=0)
    emergency_idle_timeout_s: Optional[float] = Field(None, gt=0)
    associate_timeout_s: float = Field(0.5, gt=0)
    mobility_step_s: float = Field(0.5, gt=0)
    drain_s: float = Field(30.0, ge=0)


class NodeEnergyDoc(_Doc):
    battery_j: float = Field(1000.0, ge=0)
    tx_cost_j: float = Field(0.0, ge=0)
    low_battery_fraction: float = Field(0.1, gt=0, lt=1)


class FaultDoc(_Doc):
    t: float = Field(ge=0)
    action: Literal["crash", "recover", "battery"]
    node: str
    battery_j: Optional[float] = Field(None, ge=0)


class RandomWaypointDoc(_Doc):
    n_waypoints: int = Field(ge=1)
    speed_mps: tuple[float, float]
    start: Optional[tuple[float, float]] = None


class MobilityDoc(_Doc):
    waypoints: Optional[list[tuple[float, float]]] = None
    speed_mps: Union[float, list[float]] = 1.0
    start_s: float = Field(0.0, ge=0)
    random_waypoint: Optional[RandomWaypointDoc] = None


class ScenarioDoc(_Doc):
    schema_version: Literal[1]
    name: str
    duration_s: float = Field(ge=0)
    seed: int = Field(ge=0, lt=2**64)
    topology: TopologyDoc
    thresholds: dict[AppKind, RangeDoc] = {}
    sensors: list[SensorDoc] = []
    link_defaults: dict[LinkKind, LinkParamsDoc] = {}
    packet_bits: dict[AppKind, int] = {}
    capacities: CapacitiesDoc = CapacitiesDoc()
    timers: TimersDoc = TimersDoc()
    energy: dict[str, NodeEnergyDoc] = {}
    fault_plan: list[FaultDoc] = []
    mobility: dict[str, MobilityDoc] = {}

    @field_validator("thresholds", "packet_bits", mode="before")
    @classmethod
    def _app_keys(cls, v):
        return {normalize_app(k): x for k, x in v.items()} if isinstance(v, dict) else v


@dataclass
class Timers:
    heartbeat_s: float = 1.0
    missed_heartbeats: int = 3
    packet_in_retry_s: float = 2.0
    packet_in_max_retries: int = 5
    idle_timeout_s: float = 30.0
    emergency_idle_timeout_s: float = math.inf
    associate_timeout_s: float = 0.5
    mobility_step_s: float = 0.5
    drain_s: float = 30.0


@dataclass
class Capacities:
    queue: int = 64
    miss_buffer: int = 16
    flow_table: Optional[int] = None


@dataclass(frozen=True)
class NodeEnergy:
    battery_j: float = 1000.0
    tx_cost_j: float = 0.0
    low_battery_fraction: float = 0.1

    def battery(self) -> Battery:
        return Battery(self.battery_j, self.low_battery_fraction)


@dataclass(frozen=True)
class Fault:
    t: float
    action: str
    node: NodeId
    battery_j: Optional[float] = None


@dataclass
class Scenario:
    name: str
    duration_s: float
    seed: int
    topology: Topology
    thresholds: Thresholds
    sensors: list[SensorModel] = field(default_factory=list)
    packet_bits: dict[AppKind, int] = field(default_factory=dict)
    capacities: Capacities = field(default_factory=Capacities)
    timers: Timers = field(default_factory=Timers)
    node_energy: dict[NodeId, NodeEnergy] = field(default_factory=dict)
    fault_plan: list[Fault] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def link_defaults(self) -> dict[LinkKind, LinkParams]:
        return self.topology.link_defaults

    def size_bits(self, app: AppKind) -> int:
        return self.packet_bits.get(app, APP_PROFILES[app].size_bits)

    def energy_for(self, node: NodeId) -> NodeEnergy:
        return self.node_energy.get(node, NodeEnergy())


# -- parsing ---------------------------------------------------------------

def _fmt_loc(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def _node(text: str, where: str) -> NodeId:
    try:
        return NodeId.parse(text)
    except ConfigError:
        raise ConfigError(f"{where}: not a node id: {text!r}") from None


def load_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<document>: not valid YAML ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>: scenario document must be a mapping")
    return doc


def parse_scenario(text: str, overrides: Optional[list[str]] = None) -> Scenario:
    doc = load_document(text)
    for ov in overrides or ():
        apply_override(doc, ov)
    return build_scenario(doc)


def load_scenario(path: Union[str, Path], overrides: Optional[list[str]] = None) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, overrides)


def build_scenario(doc: dict) -> Scenario:
    try:
        d = ScenarioDoc.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(f"{_fmt_loc(err['loc'])}: {err['msg']}") from None

    link_defaults = dict(DEFAULT_LINKS)
    for kind, p in d.link_defaults.items():
        base = link_defaults[kind]
        try:
            link_defaults[kind] = LinkParams(
                base.base_latency_s if p.latency_s is None else p.latency_s,
                base.bandwidth_bps if p.bandwidth_bps is None else p.bandwidth_bps,
                base.loss_prob if p.loss_prob is None else p.loss_prob,
            )
        except ValueError as exc:
            raise ConfigError(f"link_defaults.{kind.value}: {exc}") from None
    if link_defaults[LinkKind.INTERCONNECT].loss_prob != 0:
        raise ConfigError("link_defaults.interconnect.loss_prob: controller interconnect is wired; must be 0")

    t = d.topology
    n, n_relays = t.n_patients, t.relays
    positions = {_node(k, f"topology.positions.{k}"): tuple(v) for k, v in t.positions.items()}
    ranges = dict(DEFAULT_RANGES)
    ranges.update({LinkKind(k): v for k, v in t.radio_range_m.items()})

    mobility = {}
    for name, m in d.mobility.items():
        sw = _node(name, f"mobility.{name}")
        where = f"mobility.{name}"
        try:
            if m.random_waypoint is not None:
                rng = random.Random(f"{d.seed}/mobility/{sw}")
                rw = m.random_waypoint
                start = rw.start or positions.get(sw)
                mobility[sw] = random_waypoint_plan(rng, t.floor_plan, rw.n_waypoints, rw.speed_mps, start, m.start_s)
            elif m.waypoints:
                speeds = m.speed_mps if isinstance(m.speed_mps, list) else [m.speed_mps]
                mobility[sw] = MobilityPlan([tuple(p) for p in m.waypoints], speeds, m.start_s)
            else:
                raise ValueError("needs waypoints or random_waypoint")
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    if t.links is None:
        links = [
            LinkModel.between(switch(i), _gw(), LinkKind.UPLINK, link_defaults[LinkKind.UPLINK])
            for i in range(n + n_relays)
            if switch(i) not in mobility
        ]
    else:
        links = []
        up = link_defaults[LinkKind.UPLINK]
        for i, ld in enumerate(t.links):
            where = f"topology.links.{i}"
            try:
                links.append(LinkModel(
                    _node(ld.a, where + ".a"),
                    _node(ld.b, where + ".b"),
                    LinkKind.UPLINK,
                    up.base_latency_s if ld.latency_s is None else ld.latency_s,
                    up.bandwidth_bps if ld.bandwidth_bps is None else ld.bandwidth_bps,
                    up.loss_prob if ld.loss_prob is None else ld.loss_prob,
                ))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None

    prefs = {
        _node(k, f"topology.lc_preference.{k}"): [_node(x, f"topology.lc_preference.{k}") for x in v]
        for k, v in t.lc_preference.items()
    }
    topo = Topology(
        n_patients=n,
        j_controllers=t.j_controllers,
        n_relays=n_relays,
        has_central=t.central_controller,
        floor_plan=tuple(t.floor_plan),
        links=links,
        lc_preference={},
        positions=positions,
        radio_range_m=ranges,
        link_defaults=link_defaults,
        mobility=mobility,
    )
    if prefs:
        # fill in explicit preferences over the round-robin default
        topo.lc_preference.update(prefs)
    topo.validate()

    ranges_by_app = {app: prof.normal_range for app, prof in APP_PROFILES.items()}
    for app, r in d.thresholds.items():
        if not r.low < r.high:
            raise ConfigError(f"thresholds.{app.value}: low ({r.low}) must be below high ({r.high})")
        ranges_by_app[app] = (r.low, r.high)
    thresholds = Thresholds(ranges_by_app)

    sensors = []
    for i, sd in enumerate(d.sensors):
        where = f"sensors.{i}"
        if sd.patient >= n:
            raise ConfigError(f"{where}.patient: no patient {sd.patient} (n_patients={n})")
        prof = APP_PROFILES[sd.app]
        sensors.append(SensorModel(
            id=sensor(i),
            switch=switch(sd.patient),
            app=sd.app,
            period_s=prof.period_s if sd.period_s is None else sd.period_s,
            baseline=prof.baseline if sd.baseline is None else sd.baseline,
            jitter_stddev=prof.jitter_stddev if sd.jitter_stddev is None else sd.jitter_stddev,
            phase_s=sd.phase_s,
            anomaly_episodes=[(e.start_s, e.end_s, e.value) for e in sd.episodes],
            bounds=prof.bounds,
            battery=Battery(sd.battery_j, sd.low_battery_fraction),
            tx_cost_j=sd.tx_cost_j,
            sample_cost_j=sd.sample_cost_j,
        ))

    known = topo.nodes() | {s.id for s in sensors}
    node_energy = {}
    for name, e in d.energy.items():
        nid = _node(name, f"energy.{name}")
        if nid not in topo.all_switches:
            raise ConfigError(f"energy.{name}: only switches carry a node battery (sensors configure their own)")
        node_energy[nid] = NodeEnergy(e.battery_j, e.tx_cost_j, e.low_battery_fraction)

    faults = []
    for i, f in enumerate(d.fault_plan):
        nid = _node(f.node, f"fault_plan.{i}.node")
        if nid not in known:
            raise ConfigError(f"fault_plan.{i}.node: unknown node {f.node}")
        if f.action == "battery":
            if f.battery_j is None:
                raise ConfigError(f"fault_plan.{i}.battery_j: required for a battery action")
            if nid.kind not in (NodeKind.SENSOR, NodeKind.SWITCH):
                raise ConfigError(f"fault_plan.{i}.node: {f.node} has no battery")
        faults.append(Fault(f.t, f.action, nid, f.battery_j))

    tm = d.timers
    timers = Timers(
        heartbeat_s=tm.heartbeat_s,
        missed_heartbeats=tm.missed_heartbeats,
        packet_in_retry_s=tm.packet_in_retry_s,
        packet_in_max_retries=tm.packet_in_max_retries,
        idle_timeout_s=tm.idle_timeout_s,
        emergency_idle_timeout_s=math.inf if tm.emergency_idle_timeout_s is None else tm.emergency_idle_timeout_s,
        associate_timeout_s=tm.associate_timeout_s,
        mobility_step_s=tm.mobility_step_s,
        drain_s=tm.drain_s,
    )
    c = d.capacities
    return Scenario(
        name=d.name,
        duration_s=d.duration_s,
        seed=d.seed,
        topology=topo,
        thresholds=thresholds,
        sensors=sensors,
        packet_bits={app: bits for app, bits in d.packet_bits.items()},
        capacities=Capacities(c.queue, c.miss_buffer, c.flow_table),
        timers=timers,
        node_energy=node_energy,
        fault_plan=sorted(faults, key=lambda f: f.t),
    )


def _gw() -> NodeId:
    return NodeId(NodeKind.GATEWAY, 0)


# -- overrides -------------------------------------------------------------

RADIO_LINK_KEYS = ("body", "uplink", "control")


def apply_override(doc: dict, item: str) -> None:
    """Apply ``dotted.path=value`` to a raw scenario document in place.

    ``link.<field>`` is shorthand for setting ``<field>`` on every radio
    link kind (body, uplink, control). Values are parsed as YAML scalars.
    """
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    path, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    parts = path.strip().split(".")
    if parts[0] == "link" and len(parts) == 2:
        defaults = doc.setdefault("link_defaults", {})
        for kind in RADIO_LINK_KEYS:
            defaults.setdefault(kind, {})[parts[1]] = value
        return
    node: Any = doc
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
        else:
            node = node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def with_overrides(doc: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(doc)
    for ov in overrides:
        apply_override(out, ov)
    return out
