"""Team-wide state carried with the leadership token: per-agent entries, the
room registry, and per-target progress.  All types are immutable so a
snapshot can be handed across the simulated network by value."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .world import Cell

UNCLAIMED, LOCKED, FOUND = "unclaimed", "locked", "found"
FRONTIER_PREFIX = "frontier-"


def frontier_room(agent_id: int) -> str:
    """Per-agent pseudo-room standing for 'nearest unexplored frontier'."""
    return f"{FRONTIER_PREFIX}{agent_id}"


def is_frontier(room_id: str | None) -> bool:
    return bool(room_id) and room_id.startswith(FRONTIER_PREFIX)


def room_sort_key(room_id: str) -> tuple:
    head = room_id.rstrip("0123456789")
    tail = room_id[len(head):]
    return (head, int(tail) if tail else -1, room_id)


def _cells(raw) -> frozenset[Cell]:
    return frozenset((int(x), int(y)) for x, y in raw)


@dataclass(frozen=True)
class RoomInfo:
    room_id: str
    label: str
    objects: tuple[str, ...] = ()
    cells: frozenset[Cell] = frozenset()
    explored: bool = False
    likely_targets: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.room_id,
            "label": self.label,
            "objects": list(self.objects),
            "cells": sorted([list(c) for c in self.cells], key=lambda c: (c[1], c[0])),
            "explored": self.explored,
            "likely": list(self.likely_targets),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoomInfo":
        return cls(d["id"], d["label"], tuple(d["objects"]), _cells(d["cells"]), bool(d["explored"]), tuple(d["likely"]))


@dataclass(frozen=True)
class AgentEntry:
    agent_id: int
    pose: tuple[int, int, int] | None = None
    assigned_room: str | None = None
    locks: tuple[str, ...] = ()
    rooms_contributed: tuple[str, ...] = ()
    alive: bool = True
    sightings: tuple[tuple[str, Cell], ...] = ()

    def to_dict(self) -> dict:
        return {
            "agent": self.agent_id,
            "pose": list(self.pose) if self.pose is not None else None,
            "room": self.assigned_room,
            "locks": list(self.locks),
            "contributed": list(self.rooms_contributed),
            "alive": self.alive,
            "sightings": [[cls, list(cell)] for cls, cell in self.sightings],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AgentEntry":
        return cls(
            int(d["agent"]),
            tuple(int(v) for v in d["pose"]) if d["pose"] is not None else None,
            d["room"],
            tuple(d["locks"]),
            tuple(d["contributed"]),
            bool(d["alive"]),
            tuple((c, (int(x), int(y))) for c, (x, y) in d["sightings"]),
        )


@dataclass(frozen=True)
class GlobalState:
    agents: tuple[AgentEntry, ...]
    rooms: tuple[RoomInfo, ...] = ()
    version: int = 0
    next_room: int = 0

    def agent(self, agent_id: int) -> AgentEntry:
        for e in self.agents:
            if e.agent_id == agent_id:
                return e
        raise KeyError(agent_id)

    def room(self, room_id: str) -> RoomInfo | None:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        return None

    def room_ids(self) -> list[str]:
        return [r.room_id for r in self.rooms]

    def with_agent(self, entry: AgentEntry) -> "GlobalState":
        agents = tuple(entry if e.agent_id == entry.agent_id else e for e in self.agents)
        return replace(self, agents=agents)

    def with_room(self, info: RoomInfo) -> "GlobalState":
        rooms = [r for r in self.rooms if r.room_id != info.room_id] + [info]
        rooms.sort(key=lambda r: room_sort_key(r.room_id))
        return replace(self, rooms=tuple(rooms))

    def without_rooms(self, ids: Iterable[str]) -> "GlobalState":
        ids = set(ids)
        return replace(self, rooms=tuple(r for r in self.rooms if r.room_id not in ids))

    def bump(self) -> "GlobalState":
        return replace(self, version=self.version + 1)

    def assignments(self, alive_only: bool = True) -> dict[int, str]:
        return {
            e.agent_id: e.assigned_room
            for e in self.agents
            if e.assigned_room is not None and (e.alive or not alive_only)
        }

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "next_room": self.next_room,
            "agents": [e.to_dict() for e in self.agents],
            "rooms": [r.to_dict() for r in self.rooms],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GlobalState":
        return cls(
            tuple(AgentEntry.from_dict(a) for a in d["agents"]),
            tuple(RoomInfo.from_dict(r) for r in d["rooms"]),
            int(d["version"]),
            int(d["next_room"]),
        )


@dataclass(frozen=True)
class TargetStatus:
    state: str = UNCLAIMED
    holder: int | None = None
    sighted: bool = False

    def __post_init__(self):
        if self.state not in (UNCLAIMED, LOCKED, FOUND):
            raise ValueError(f"bad target state {self.state!r}")
        if (self.state == LOCKED) != (self.holder is not None):
            raise ValueError("exactly the locked state carries a holder")


@dataclass(frozen=True)
class GlobalProgress:
    targets: tuple[str, ...]
    status: tuple[tuple[str, TargetStatus], ...] = field(default=())

    def __post_init__(self):
        if not self.status:
            object.__setattr__(self, "status", tuple((t, TargetStatus()) for t in self.targets))

    def of(self, target: str) -> TargetStatus:
        return dict(self.status)[target]

    def remaining(self) -> tuple[str, ...]:
        return tuple(t for t, s in self.status if s.state != FOUND)

    def found(self) -> tuple[str, ...]:
        return tuple(t for t, s in self.status if s.state == FOUND)

    def holder(self, target: str) -> int | None:
        return self.of(target).holder

    def locks(self) -> dict[str, int]:
        return {t: s.holder for t, s in self.status if s.state == LOCKED}

    def locks_of(self, agent_id: int) -> tuple[str, ...]:
        return tuple(t for t, s in self.status if s.state == LOCKED and s.holder == agent_id)

    def set(self, target: str, status: TargetStatus) -> "GlobalProgress":
        current = self.of(target)
        if current.state == FOUND and status.state != FOUND:
            return self
        return replace(self, status=tuple((t, status if t == target else s) for t, s in self.status))

    def mark_found(self, targets: Iterable[str]) -> "GlobalProgress":
        out = self
        for t in targets:
            if t in self.targets:
                out = out.set(t, TargetStatus(FOUND))
        return out

    def release(self, agent_id: int) -> "GlobalProgress":
        out = self
        for t in self.locks_of(agent_id):
            out = out.set(t, TargetStatus(UNCLAIMED))
        return out

    def to_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "status": [
                {"class": t, "state": s.state, "holder": s.holder, "sighted": s.sighted} for t, s in self.status
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GlobalProgress":
        return cls(
            tuple(d["targets"]),
            tuple((s["class"], TargetStatus(s["state"], s["holder"], bool(s["sighted"]))) for s in d["status"]),
        )
