"""Body sensor models: periodic readings, scripted anomalies, linear energy use."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .model import AppKind, NodeId, PhysiologicalReading


@dataclass(frozen=True)
class AppProfile:
    period_s: float
    baseline: float
    jitter_stddev: float
    normal_range: tuple[float, float]
    bounds: tuple[float, float]
    size_bits: int


# scenario-overridable defaults; blood pressure is systolic only, ECG is R-peak amplitude in mV
APP_PROFILES = {
    AppKind.HEART_RATE: AppProfile(1.0, 72.0, 3.0, (50.0, 120.0), (20.0, 250.0), 1000),
    AppKind.ECG: AppProfile(0.25, 1.2, 0.1, (0.5, 2.5), (0.0, 5.0), 2000),
    AppKind.TEMPERATURE: AppProfile(30.0, 36.8, 0.2, (35.0, 38.5), (30.0, 43.0), 800),
    AppKind.GLUCOSE: AppProfile(300.0, 5.5, 0.4, (3.9, 10.0), (1.0, 30.0), 800),
    AppKind.BLOOD_PRESSURE: AppProfile(60.0, 118.0, 5.0, (90.0, 140.0), (50.0, 250.0), 800),
}


class EnergyKind(enum.Enum):
    TRANSMIT = "transmit"
    SAMPLE = "sample"


@dataclass
class Battery:
    initial_j: float
    low_fraction: float = 0.1
    level_j: float = None
    low_signalled: bool = False
    dead: bool = False

    def __post_init__(self):
        if self.level_j is None:
            self.level_j = self.initial_j
        if self.initial_j < 0:
            raise ValueError("battery capacity must be non-negative")
        if not 0 < self.low_fraction < 1:
            raise ValueError("low_battery_fraction must lie in (0, 1)")
        if self.level_j <= 0:
            self.dead = True

    @property
    def consumed_j(self) -> float:
        return self.initial_j - self.level_j

    def drain_to(self, level_j: float) -> list[str]:
        """Force the level down (never up) and report latch crossings."""
        return self.spend(max(0.0, self.level_j - level_j))

    def spend(self, joules: float) -> list[str]:
        if self.dead or joules <= 0:
            return []
        self.level_j = max(0.0, self.level_j - joules)
        events = []
        if not self.low_signalled and self.level_j <= self.low_fraction * self.initial_j:
            self.low_signalled = True
            events.append("low_battery")
        if self.level_j <= 0.0:
            self.dead = True
            events.append("node_dead")
        return events


@dataclass
class SensorModel:
    id: NodeId
    switch: NodeId
    app: AppKind
    period_s: float
    baseline: float
    jitter_stddev: float = 0.0
    phase_s: Optional[float] = None
    anomaly_episodes: list[tuple[float, float, float]] = field(default_factory=list)
    bounds: tuple[float, float] = (-math.inf, math.inf)
    battery: Battery = field(default_factory=lambda: Battery(100.0))
    tx_cost_j: float = 0.001
    sample_cost_j: float = 0.0005
    suppressed: int = 0

    def __post_init__(self):
        if not self.period_s > 0:
            raise ValueError(f"{self.id}: period_s must be positive")
        if self.jitter_stddev < 0:
            raise ValueError(f"{self.id}: jitter_stddev must be non-negative")

    def episode_value(self, now: float) -> Optional[float]:
        for start, end, value in self.anomaly_episodes:
            if start <= now < end:
                return value
        return None

    def sample_times(self, until: float):
        """Scheduled sample instants ``phase + k * period`` up to ``until`` inclusive."""
        k = 0
        phase = self.phase_s or 0.0
        while True:
            t = phase + k * self.period_s
            if t > until:
                return
            yield t
            k += 1


def sensor_stream(seed: int, sensor_id: NodeId) -> random.Random:
    # string seeds hash deterministically, independent of PYTHONHASHSEED
    return random.Random(f"{seed}/sensor/{sensor_id}")


def next_reading(sm: SensorModel, now: float, rng: random.Random) -> PhysiologicalReading:
    # always consume one draw so episodes do not shift later jitter
    noise = rng.gauss(0.0, 1.0)
    scripted = sm.episode_value(now)
    if scripted is not None:
        return PhysiologicalReading(sm.app, scripted, now)
    lo, hi = sm.bounds
    value = min(hi, max(lo, sm.baseline + sm.jitter_stddev * noise))
    return PhysiologicalReading(sm.app, value, now)


def spend_energy(sm: SensorModel, kind: EnergyKind) -> list[str]:
    """Charge one operation to the sensor battery.

    Returns the latch events crossed by this charge: ``low_battery`` at most
    once per run, ``node_dead`` when the battery reaches zero. A dead sensor
    suppresses the send and counts it.
    """
    if sm.battery.dead:
        if kind is EnergyKind.TRANSMIT:
            sm.suppressed += 1
            return ["send_suppressed"]
        return []
    cost = sm.tx_cost_j if kind is EnergyKind.TRANSMIT else sm.sample_cost_j
    return sm.battery.spend(cost)
