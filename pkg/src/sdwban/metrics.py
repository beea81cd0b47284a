"""Aggregate a trace into per-class delivery, latency, control and energy figures."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import SdwbanError, TrafficClass
from .trace import TraceError

DROP_REASONS = (
    "link_loss",
    "out_of_range",
    "endpoint_down",
    "overflow",
    "no_route",
    "packet_in_timeout",
    "node_crash",
    "dead_battery",
)


class ConservationError(SdwbanError):
    pass


@dataclass
class ClassStats:
    generated: int
    delivered: int
    delivery_ratio: Optional[float]
    latency_mean_s: Optional[float] = None
    latency_p50_s: Optional[float] = None
    latency_p95_s: Optional[float] = None
    latency_max_s: Optional[float] = None
    latencies: list[float] = field(default_factory=list, repr=False)


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    per_class: dict[TrafficClass, Optional[ClassStats]]
    packet_ins: int = 0
    flow_mods: int = 0
    broadcasts: int = 0
    heartbeats: int = 0
    control_bytes: float = 0.0
    energy_j: dict[str, float] = field(default_factory=dict)
    nodes_dead: list[str] = field(default_factory=list)
    handovers: int = 0
    failovers: int = 0
    drops: dict[str, int] = field(default_factory=dict)
    residual_in_flight: int = 0

    @property
    def energy_total_j(self) -> float:
        return sum(self.energy_j.values())

    def stats(self, cls: TrafficClass) -> Optional[ClassStats]:
        return self.per_class.get(cls)


def _class_stats(generated: int, latencies: list[float]) -> Optional[ClassStats]:
    if generated == 0:
        return None
    st = ClassStats(generated, len(latencies), len(latencies) / generated, latencies=latencies)
    if latencies:
        arr = np.asarray(latencies, dtype=float)
        st.latency_mean_s = float(arr.mean())
        st.latency_p50_s = float(np.percentile(arr, 50))
        st.latency_p95_s = float(np.percentile(arr, 95))
        st.latency_max_s = float(arr.max())
    return st


def summarize(records: list[dict]) -> MetricsReport:
    if not records:
        raise TraceError("empty trace")
    end = records[-1]
    if end["event"] != "run_end":
        raise TraceError(f"trace is truncated (no run_end); last valid record seq={end['seq']}")
    start = records[0] if records[0]["event"] == "run_start" else {"fields": {}}

    generated: dict[str, int] = Counter()
    latencies: dict[str, list[float]] = {c.value: [] for c in TrafficClass}
    created: set[int] = set()
    finished: set[int] = set()
    drops: Counter = Counter()
    rep = MetricsReport(
        scenario=start["fields"].get("scenario", ""),
        seed=start["fields"].get("seed", 0),
        per_class={},
    )

    def finish(pid: int, seq: int) -> None:
        if pid in finished:
            raise ConservationError(f"packet {pid} reaches a terminal state twice (seq={seq})")
        finished.add(pid)

    for r in records:
        ev, f = r["event"], r["fields"]
        if ev == "sample_emitted":
            generated[f["class"]] += 1
            created.add(f["packet_id"])
        elif ev == "delivered":
            latencies[f["class"]].append(f["latency"])
            finish(f["packet_id"], r["seq"])
        elif ev == "drop":
            drops[f["reason"]] += 1
            finish(f["packet_id"], r["seq"])
        elif ev == "send_suppressed":
            drops["dead_battery"] += 1
            finish(f["packet_id"], r["seq"])
        elif ev == "packet_in_sent":
            rep.packet_ins += 1
        elif ev == "flow_mod_sent":
            rep.flow_mods += 1
        elif ev == "emergency_broadcast":
            rep.broadcasts += 1
        elif ev == "heartbeat":
            rep.heartbeats += 1
        elif ev == "handover_notice" and not f.get("relayed"):
            rep.handovers += 1
        elif ev == "association_changed" and f.get("from") is not None and f.get("state") == "associated":
            rep.failovers += 1
        if "bits" in f and ev in _CONTROL_SENDS:
            rep.control_bytes += f["bits"] / 8

    residual = set(end["fields"].get("residual_in_flight", []))
    if residual & finished:
        raise ConservationError(f"packets both in flight and finished: {sorted(residual & finished)[:5]}")
    if created != finished | residual:
        missing = sorted(created - finished - residual)
        raise ConservationError(f"{len(missing)} packets unaccounted for, e.g. {missing[:5]}")

    for cls in TrafficClass:
        rep.per_class[cls] = _class_stats(generated[cls.value], latencies[cls.value])
    rep.drops = dict(sorted(drops.items()))
    rep.residual_in_flight = len(residual)
    rep.energy_j = dict(end["fields"].get("energy_j", {}))
    rep.nodes_dead = list(end["fields"].get("nodes_dead", []))
    return rep


_CONTROL_SENDS = {
    "hello_sent",
    "associate_sent",
    "associate_ack_sent",
    "packet_in_sent",
    "flow_mod_sent",
    "emergency_broadcast",
    "low_battery_sent",
    "handover_notice",
    "heartbeat",
}


# -- output ----------------------------------------------------------------

_CLASS_COLS = ("generated", "delivered", "delivery_ratio", "latency_mean_s", "latency_p50_s",
               "latency_p95_s", "latency_max_s")

CSV_COLUMNS = (
    ["scenario", "seed"]
    + [f"{c.value}_{col}" for c in TrafficClass for col in _CLASS_COLS]
    + ["packet_ins", "flow_mods", "broadcasts", "heartbeats", "control_bytes",
       "energy_total_j", "nodes_dead", "handovers", "failovers"]
    + [f"drop_{r}" for r in DROP_REASONS]
    + ["residual_in_flight"]
)


def csv_row(rep: MetricsReport) -> dict:
    row = {"scenario": rep.scenario, "seed": rep.seed}
    for c in TrafficClass:
        st = rep.per_class.get(c)
        for col in _CLASS_COLS:
            v = None if st is None else getattr(st, col)
            row[f"{c.value}_{col}"] = "" if v is None else v
    row.update(
        packet_ins=rep.packet_ins,
        flow_mods=rep.flow_mods,
        broadcasts=rep.broadcasts,
        heartbeats=rep.heartbeats,
        control_bytes=rep.control_bytes,
        energy_total_j=rep.energy_total_j,
        nodes_dead=len(rep.nodes_dead),
        handovers=rep.handovers,
        failovers=rep.failovers,
        residual_in_flight=rep.residual_in_flight,
    )
    for r in DROP_REASONS:
        row[f"drop_{r}"] = rep.drops.get(r, 0)
    return row


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def to_csv(reports: list[MetricsReport]) -> str:
    return rows_to_csv([csv_row(rep) for rep in reports])


def _fmt(v: Optional[float], unit: str = "") -> str:
    return "n/a" if v is None else f"{v:.6g}{unit}"


def report_text(rep: MetricsReport) -> str:
    lines = [f"scenario {rep.scenario} (seed {rep.seed})", ""]
    for c in TrafficClass:
        st = rep.per_class.get(c)
        if st is None:
            continue
        lines.append(f"[{c.value}]")
        lines.append(f"  generated       {st.generated}")
        lines.append(f"  delivered       {st.delivered}")
        lines.append(f"  delivery ratio  {_fmt(st.delivery_ratio)}")
        lines.append(f"  latency mean    {_fmt(st.latency_mean_s, ' s')}")
        lines.append(f"  latency p50     {_fmt(st.latency_p50_s, ' s')}")
        lines.append(f"  latency p95     {_fmt(st.latency_p95_s, ' s')}")
        lines.append(f"  latency max     {_fmt(st.latency_max_s, ' s')}")
        lines.append("")
    lines.append("[control]")
    lines.append(f"  packet-ins      {rep.packet_ins}")
    lines.append(f"  flow-mods       {rep.flow_mods}")
    lines.append(f"  broadcasts      {rep.broadcasts}")
    lines.append(f"  heartbeats      {rep.heartbeats}")
    lines.append(f"  control bytes   {rep.control_bytes:g}")
    lines.append("")
    lines.append("[events]")
    lines.append(f"  handovers       {rep.handovers}")
    lines.append(f"  failovers       {rep.failovers}")
    for reason, n in rep.drops.items():
        lines.append(f"  drop {reason:<18} {n}")
    lines.append(f"  still in flight {rep.residual_in_flight}")
    lines.append("")
    lines.append("[energy]")
    lines.append(f"  total           {rep.energy_total_j:.6g} J")
    lines.append(f"  nodes dead      {len(rep.nodes_dead)}")
    return "\n".join(lines) + "\n"
