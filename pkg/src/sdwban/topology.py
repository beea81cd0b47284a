"""Physical layout: patients, relays, controllers, gateway, links and positions."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

from .links import DEFAULT_LINKS, RADIO_KINDS, LinkKind, LinkModel, LinkParams
from .mobility import MobilityPlan, Point, nearest_attachment
from .model import (
    ConfigError,
    NodeId,
    NodeKind,
    central_controller,
    cloud,
    gateway,
    local_controller,
    switch,
)
from .routing import TopologyView

DEFAULT_RANGES = {
    LinkKind.BODY: 5.0,
    LinkKind.UPLINK: 60.0,
    LinkKind.CONTROL: 1000.0,
}


@dataclass
class Topology:
    n_patients: int
    j_controllers: int
    n_relays: int = 0
    has_central: bool = True
    floor_plan: Point = (100.0, 100.0)
    links: list[LinkModel] = field(default_factory=list)
    lc_preference: dict[NodeId, list[NodeId]] = field(default_factory=dict)
    positions: dict[NodeId, Point] = field(default_factory=dict)
    radio_range_m: dict[LinkKind, float] = field(default_factory=lambda: dict(DEFAULT_RANGES))
    link_defaults: dict[LinkKind, LinkParams] = field(default_factory=lambda: dict(DEFAULT_LINKS))
    mobility: dict[NodeId, MobilityPlan] = field(default_factory=dict)
    attachment: dict[NodeId, NodeId] = field(default_factory=dict)
    gateway: NodeId = field(default_factory=gateway)
    cloud: NodeId = field(default_factory=cloud)

    def __post_init__(self):
        if not self.lc_preference:
            self.lc_preference = round_robin_preferences(self.all_switches, self.lcs)
        for sw, plan in self.mobility.items():
            self.positions[sw] = plan.position_at(0.0)
        for sw in sorted(self.mobility):
            att = nearest_attachment(
                self.positions[sw], self.attachment_candidates(), self.positions, self.radio_range(LinkKind.UPLINK)
            )
            if att is not None:
                self.attachment[sw] = att

    # -- node sets --------------------------------------------------------

    @property
    def patient_switches(self) -> list[NodeId]:
        return [switch(i) for i in range(self.n_patients)]

    @property
    def relays(self) -> list[NodeId]:
        return [switch(self.n_patients + k) for k in range(self.n_relays)]

    @property
    def all_switches(self) -> list[NodeId]:
        return self.patient_switches + self.relays

    @property
    def lcs(self) -> list[NodeId]:
        return [local_controller(j) for j in range(self.j_controllers)]

    @property
    def central(self) -> Optional[NodeId]:
        return central_controller(0) if self.has_central else None

    @property
    def controllers(self) -> list[NodeId]:
        return self.lcs + ([self.central] if self.has_central else [])

    def nodes(self) -> set[NodeId]:
        return set(self.all_switches) | set(self.controllers) | {self.gateway, self.cloud}

    def patient_of(self, sw: NodeId) -> Optional[int]:
        return sw.index if sw.kind is NodeKind.SWITCH and sw.index < self.n_patients else None

    def attachment_candidates(self) -> list[NodeId]:
        return self.relays + [self.gateway]

    def radio_range(self, kind: LinkKind) -> float:
        return self.radio_range_m.get(kind, math.inf)

    # -- links ------------------------------------------------------------

    def in_range(self, a: NodeId, b: NodeId, kind: LinkKind) -> bool:
        if kind not in RADIO_KINDS:
            return True
        pa, pb = self.positions.get(a), self.positions.get(b)
        if pa is None or pb is None:
            return True
        return math.dist(pa, pb) <= self.radio_range(kind)

    def data_link(self, a: NodeId, b: NodeId) -> Optional[LinkModel]:
        """Link used to carry a data frame from ``a`` to ``b``, if one exists now."""
        if a in self.mobility or b in self.mobility:
            if b not in self.attachment_candidates() and a not in self.attachment_candidates():
                return None
            if not self.in_range(a, b, LinkKind.UPLINK):
                return None
            return LinkModel.between(a, b, LinkKind.UPLINK, self.link_defaults[LinkKind.UPLINK])
        for link in self.links:
            if {link.a, link.b} == {a, b}:
                return link
        return None

    def control_link(self, a: NodeId, b: NodeId) -> LinkModel:
        if a.kind in _CONTROLLER_KINDS and b.kind in _CONTROLLER_KINDS:
            kind = LinkKind.INTERCONNECT
        else:
            kind = LinkKind.CONTROL
        return LinkModel.between(a, b, kind, self.link_defaults[kind])

    def backhaul(self) -> LinkModel:
        return LinkModel.between(self.gateway, self.cloud, LinkKind.BACKHAUL, self.link_defaults[LinkKind.BACKHAUL])

    def initial_view(self) -> TopologyView:
        view = TopologyView()
        for n in self.all_switches + [self.gateway]:
            view.add_node(n)
        for link in self.links:
            view.add_link(link.a, link.b, max(link.base_latency_s, 1e-9))
        for sw, att in sorted(self.attachment.items()):
            view.add_link(sw, att, max(self.link_defaults[LinkKind.UPLINK].base_latency_s, 1e-9))
        return view

    def copy(self) -> "Topology":
        return copy.deepcopy(self)

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ConfigError("topology.n_patients: need at least one patient")
        if self.j_controllers < 1:
            raise ConfigError("topology.j_controllers: need at least one local controller")
        # a single-patient desk scenario still needs one LC
        if self.j_controllers >= self.n_patients and self.n_patients > 1:
            raise ConfigError("topology.j_controllers: J must be less than N")
        known = self.nodes()
        for i, link in enumerate(self.links):
            for side, end in (("a", link.a), ("b", link.b)):
                if end not in known:
                    raise ConfigError(f"topology.links.{i}.{side}: unknown node {end}")
            if link.a in self.mobility or link.b in self.mobility:
                raise ConfigError(f"topology.links.{i}: {link.a}-{link.b} touches a mobile switch")
        for n in self.positions:
            if n not in known:
                raise ConfigError(f"topology.positions: unknown node {n}")
        for sw, prefs in self.lc_preference.items():
            if sw not in known or sw.kind is not NodeKind.SWITCH:
                raise ConfigError(f"topology.lc_preference: unknown switch {sw}")
            for lc in prefs:
                if lc not in self.lcs:
                    raise ConfigError(f"topology.lc_preference.{sw}: unknown local controller {lc}")
        for sw in self.mobility:
            if sw not in self.patient_switches:
                raise ConfigError(f"mobility: {sw} is not a patient switch")
            if sw not in self.attachment:
                raise ConfigError(f"mobility.{sw}: no relay or gateway in uplink range at t=0")
        for sw in self.all_switches:
            if not any(self.in_range(sw, c, LinkKind.CONTROL) for c in self.controllers):
                raise ConfigError(f"topology: switch {sw} has no controller in radio range at t=0")


_CONTROLLER_KINDS = {NodeKind.LOCAL_CONTROLLER, NodeKind.CENTRAL_CONTROLLER}


def round_robin_preferences(switches: list[NodeId], lcs: list[NodeId]) -> dict[NodeId, list[NodeId]]:
    """Switch i prefers LC i mod J first, then the rest in ring order."""
    if not lcs:
        return {sw: [] for sw in switches}
    j = len(lcs)
    return {sw: [lcs[(i + k) % j] for k in range(j)] for i, sw in enumerate(switches)}
