"""Per-switch match-action flow table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .model import ContractViolation, FlowKey, InvariantError, NodeId, TrafficClass

NORMAL_PRIORITY = 10
EMERGENCY_PRIORITY = 100
DEFAULT_IDLE_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class ForwardTo:
    next_hop: NodeId
    # full controller-computed path from the owning switch to the gateway
    route: tuple[NodeId, ...] = ()

    def to_dict(self) -> dict:
        return {"type": "forward", "next_hop": str(self.next_hop), "route": [str(n) for n in self.route]}


@dataclass(frozen=True)
class Drop:
    def to_dict(self) -> dict:
        return {"type": "drop"}


Action = Union[ForwardTo, Drop]


def action_from_dict(d: dict) -> Action:
    if d["type"] == "drop":
        return Drop()
    return ForwardTo(NodeId.parse(d["next_hop"]), tuple(NodeId.parse(n) for n in d["route"]))


@dataclass
class FlowEntry:
    key: FlowKey
    action: Action
    priority: int
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S
    installed_at: float = 0.0
    last_matched_at: float = 0.0
    match_count: int = 0

    def __post_init__(self):
        if self.priority < 0:
            raise InvariantError("flow priority must be non-negative")
        if not self.idle_timeout_s > 0:
            raise InvariantError("idle timeout must be positive")

    def expired(self, now: float) -> bool:
        return now - self.last_matched_at > self.idle_timeout_s

    @property
    def route(self) -> Optional[tuple[NodeId, ...]]:
        return self.action.route if isinstance(self.action, ForwardTo) else None

    def copy(self) -> "FlowEntry":
        return replace(self)

    def to_dict(self) -> dict:
        return {
            "key": self.key.to_dict(),
            "action": self.action.to_dict(),
            "priority": self.priority,
            "idle_timeout_s": None if math.isinf(self.idle_timeout_s) else self.idle_timeout_s,
            "installed_at": self.installed_at,
            "last_matched_at": self.last_matched_at,
            "match_count": self.match_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowEntry":
        timeout = d["idle_timeout_s"]
        return cls(
            key=FlowKey.from_dict(d["key"]),
            action=action_from_dict(d["action"]),
            priority=d["priority"],
            idle_timeout_s=math.inf if timeout is None else timeout,
            installed_at=d["installed_at"],
            last_matched_at=d["last_matched_at"],
            match_count=d["match_count"],
        )


@dataclass(frozen=True)
class Hit:
    entry: FlowEntry


class TableMiss:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TableMiss"


TABLE_MISS = TableMiss()
MatchResult = Union[Hit, TableMiss]


@dataclass
class FlowTable:
    owner: NodeId
    capacity: Optional[int] = None
    entries: dict[tuple[FlowKey, int], FlowEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.values())

    def _check_owner(self, key: FlowKey) -> None:
        if key.src_switch != self.owner:
            raise ContractViolation(f"flow key {key} does not belong to table of {self.owner}")

    def _candidates(self, key: FlowKey, now: float):
        for entry in self.entries.values():
            if entry.key.matches(key) and not entry.expired(now):
                yield entry

    def peek(self, key: FlowKey, now: float) -> MatchResult:
        """Like :meth:`lookup` but leaves counters and timestamps alone."""
        self._check_owner(key)
        best = max(self._candidates(key, now), key=lambda e: e.priority, default=None)
        return TABLE_MISS if best is None else Hit(best)

    def lookup(self, key: FlowKey, now: float) -> MatchResult:
        result = self.peek(key, now)
        if isinstance(result, Hit):
            result.entry.last_matched_at = now
            result.entry.match_count += 1
        return result

    def install(self, entry: FlowEntry, now: float) -> FlowEntry:
        """Install ``entry`` (a copy is stored) and return the stored entry.

        Raises InvariantError if the entry would break emergency-over-normal
        priority ordering, or if the table is at capacity. Emergency entries
        are exempt from the capacity cap.
        """
        self._check_owner(entry.key)
        is_emergency = entry.key.traffic_class is TrafficClass.EMERGENCY
        for other in self.entries.values():
            if other.key == entry.key and other.priority == entry.priority:
                continue
            other_em = other.key.traffic_class is TrafficClass.EMERGENCY
            if is_emergency and not other_em and entry.priority <= other.priority:
                raise InvariantError(
                    f"emergency entry priority {entry.priority} must exceed normal priority {other.priority}"
                )
            if other_em and not is_emergency and entry.priority >= other.priority:
                raise InvariantError(
                    f"normal entry priority {entry.priority} must stay below emergency priority {other.priority}"
                )
        slot = (entry.key, entry.priority)
        if (
            self.capacity is not None
            and not is_emergency
            and slot not in self.entries
            and sum(1 for e in self.entries.values() if e.key.traffic_class is TrafficClass.NORMAL) >= self.capacity
        ):
            raise InvariantError(f"flow table of {self.owner} is full ({self.capacity} entries)")
        prior = self.entries.get(slot)
        # a retransmitted identical rule keeps its hit counter
        count = prior.match_count if prior is not None and prior.action == entry.action else 0
        stored = replace(entry, installed_at=now, last_matched_at=now, match_count=count)
        self.entries[slot] = stored
        return stored

    def purge_expired(self, now: float) -> list[FlowEntry]:
        removed = [e for e in self.entries.values() if e.expired(now)]
        for e in removed:
            del self.entries[(e.key, e.priority)]
        return removed

    def snapshot(self) -> dict:
        return {
            "owner": str(self.owner),
            "entries": [e.to_dict() for e in sorted(self.entries.values(), key=_entry_order)],
        }


def _entry_order(e: FlowEntry):
    app = "" if e.key.app is None else e.key.app.value
    return (-e.priority, app, e.key.traffic_class.value)
