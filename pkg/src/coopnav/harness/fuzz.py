"""Room-level episode simulator for fuzzing the leadership protocol.

Geometry is abstracted to a grid of rooms: travel takes time proportional
to the Manhattan distance between room centres and exploring a room takes
a random number of ticks.  Everything above the geometry is the real thing:
ProtocolNode, Network, Team and the rule oracle.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from ..oracle import AgentView, NoCandidateRooms, RoomOption, RoomSummary, RuleOracle
from ..protocol import LEADER_RESPONSE, AgentReport, Network, Team
from ..rooms import CooccurrenceTable, load_cooccurrence
from ..state import RoomInfo, frontier_room, is_frontier

ROOM_PITCH = 6
IDLE_RETRY = 20


@dataclass(frozen=True)
class SimRoom:
    index: int
    center: tuple[int, int]
    cells: frozenset
    label: str
    objects: tuple[str, ...]


@dataclass
class SimAgent:
    agent_id: int
    room: int
    mode: str = "idle"  # travel | explore | pursue | wait | idle | dead
    until: int = 0
    goal: int | None = None
    chasing: str | None = None
    explored: set[int] = field(default_factory=set)
    known: set[int] = field(default_factory=set)
    sightings: dict[str, tuple[int, int]] = field(default_factory=dict)


@dataclass
class FuzzOutcome:
    seed: int
    team_size: int
    max_latency: int
    targets: tuple[str, ...]
    crash_agent: int | None
    crash_tick: int | None
    completed: bool
    ticks: int
    leader_violations: list[str]
    conflict_violations: list[str]
    recoveries: list[dict]
    recovery_asked_lineage: bool
    lineage_ok: bool
    messages: dict[str, int]
    trigger_events: int
    quiescent_checks: int


class AbstractEpisode:
    def __init__(
        self,
        seed: int,
        team_size: int | None = None,
        max_latency: int | None = None,
        crash: bool = False,
        max_ticks: int = 3000,
        table: CooccurrenceTable | None = None,
    ):
        self.seed = seed
        self.rng = random.Random(seed)
        rng = self.rng
        self.table = table or load_cooccurrence()
        self.n = team_size if team_size is not None else rng.randint(2, 8)
        self.latency = max_latency if max_latency is not None else rng.randint(0, 5)
        self.max_ticks = max_ticks
        cols, rows = rng.randint(2, 4), rng.randint(2, 3)
        kinds = self.table.kinds()
        targets = rng.sample(list(self.table.classes), rng.randint(1, 4))
        placement = {t: rng.randrange(cols * rows) for t in targets}
        self.rooms: list[SimRoom] = []
        for k in range(cols * rows):
            cx, cy = (k % cols) * ROOM_PITCH + 2, (k // cols) * ROOM_PITCH + 2
            cells = frozenset((cx + dx, cy + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1))
            label = rng.choice(kinds)
            extras = [c for c, v in self.table.rooms[label].items() if v >= 0.5 and c not in targets]
            objs = set(rng.sample(extras, min(len(extras), rng.randint(0, 2))))
            objs |= {t for t, r in placement.items() if r == k}
            self.rooms.append(SimRoom(k, (cx, cy), cells, label, tuple(sorted(objs))))
        self.cols, self.rows = cols, rows
        self.targets = tuple(targets)
        self.remaining = set(targets)
        self.agents = {i: SimAgent(i, rng.randrange(len(self.rooms))) for i in range(self.n)}
        for a in self.agents.values():
            a.known = {a.room} | set(self._neighbours(a.room))
        net_rng = random.Random(seed * 7919 + 1)
        self.network = Network.random(net_rng, self.latency)
        descriptions = {i: tuple(self._local_info(a, r) for r in sorted(a.known)) for i, a in self.agents.items()}
        poses = {i: (*self.rooms[a.room].center, 0) for i, a in self.agents.items()}
        self.team = Team.create(range(self.n), self.targets, self.network, RuleOracle(self.table), descriptions, poses)
        self.crash_tick = rng.randint(1, 20) if crash and self.n > 1 else None
        self.crash_agent: int | None = None
        self.trigger_events = 0
        self.conflicts: list[str] = []
        self.quiescent_checks = 0

    # ------------------------------------------------------------- geometry

    def _neighbours(self, k: int) -> list[int]:
        c, r = k % self.cols, k // self.cols
        out = []
        for dc, dr in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nc, nr = c + dc, r + dr
            if 0 <= nc < self.cols and 0 <= nr < self.rows:
                out.append(nr * self.cols + nc)
        return out

    def _distance(self, a: int, b: int) -> int:
        (ax, ay), (bx, by) = self.rooms[a].center, self.rooms[b].center
        return abs(ax - bx) + abs(ay - by)

    def _local_info(self, agent: SimAgent, k: int) -> RoomInfo:
        room = self.rooms[k]
        seen = k in agent.explored
        return RoomInfo(
            f"a{agent.agent_id}:r{k}",
            room.label,
            room.objects if seen else (),
            room.cells,
            seen,
            self.table.likely(room.label, self.targets, 0.0),
        )

    def _room_of_cells(self, cells) -> int | None:
        for room in self.rooms:
            if room.cells & cells:
                return room.index
        return None

    # ------------------------------------------------------------- agents

    def _pose(self, a: SimAgent) -> tuple[int, int, int]:
        return (*self.rooms[a.room].center, 0)

    def _claimable(self, a: SimAgent, t: str) -> bool:
        node = self.team.nodes[a.agent_id]
        if t not in node.local.remaining():
            return False
        holder = node.local.holder(t)
        return holder is None or holder == a.agent_id

    def _look_around(self, a: SimAgent, tick: int) -> None:
        """After exploring or arriving: chase a visible claimable target, else trigger."""
        node = self.team.nodes[a.agent_id]
        for t in self.rooms[a.room].objects:
            if t not in self.targets or t not in node.local.remaining():
                continue
            if self._claimable(a, t):
                a.mode, a.chasing, a.until = "pursue", t, tick + self.rng.randint(1, 4)
                return
            a.sightings[t] = self.rooms[a.room].center
        a.mode, a.until = "idle", tick + self.rng.randint(0, 3)

    def _trigger(self, a: SimAgent, tick: int) -> None:
        node = self.team.nodes[a.agent_id]
        pose = self._pose(a)
        options: dict[str, RoomOption] = {}
        matched: set[int] = set()
        claim = [t for t in node.local.remaining() if self._claimable(a, t)]
        for info in node.state.rooms:
            k = self._room_of_cells(info.cells)
            if k is None:
                continue
            matched.add(k)
            useful = set(claim) & set(info.objects)
            if (info.explored or k in a.explored) and not useful:
                continue
            dist = self._distance(a.room, k)
            options[info.room_id] = RoomOption(info.room_id, info.label, float(dist), info.objects)
        for k in sorted(a.known - matched - a.explored):
            info = self._local_info(a, k)
            options[info.room_id] = RoomOption(info.room_id, info.label, float(self._distance(a.room, k)))
        # The frontier pseudo-room doubles as "free for any assignment".
        fid = frontier_room(a.agent_id)
        far = ROOM_PITCH if len(a.known) < len(self.rooms) else ROOM_PITCH * (self.cols + self.rows)
        options[fid] = RoomOption(fid, self.table.unknown_label, float(far))
        view = AgentView(
            pose,
            f"a{a.agent_id}:r{a.room}",
            tuple(RoomSummary(f"a{a.agent_id}:r{k}", self.rooms[k].label, (), k in a.explored) for k in sorted(a.known)),
            tuple(sorted(a.sightings.items())),
        )
        try:
            proposal = node.make_proposal(view, tuple(options.values()))
        except NoCandidateRooms:
            a.mode, a.until = "idle", tick + IDLE_RETRY
            return
        report = AgentReport(
            a.agent_id,
            pose,
            tuple(self._local_info(a, k) for k in sorted(a.known)),
            tuple(t for t in self.targets if t not in node.local.remaining()),
            tuple(sorted(a.sightings.items())),
        )
        node.pose = pose
        self.trigger_events += 1
        a.mode = "wait"
        self.team.request(a.agent_id, proposal, report, tick)

    def _apply(self, a: SimAgent, tick: int) -> None:
        node = self.team.nodes[a.agent_id]
        for d in node.take_directives():
            action = d.directive.action
            if is_frontier(action):
                unexplored = [k for k in range(len(self.rooms)) if k not in a.explored]
                goal = min(unexplored, key=lambda k: (self._distance(a.room, k), k)) if unexplored else None
            else:
                info = node.state.room(action)
                goal = self._room_of_cells(info.cells) if info is not None else None
            if goal is None:
                a.mode, a.until = "idle", tick + IDLE_RETRY
                continue
            a.goal = goal
            a.mode, a.until = "travel", tick + max(1, self._distance(a.room, goal) // 3)

    def _advance(self, a: SimAgent, tick: int) -> None:
        if a.mode == "wait" or tick < a.until:
            return
        if a.mode == "travel":
            a.room = a.goal
            a.known |= {a.room, *self._neighbours(a.room)}
            if a.room in a.explored:
                self._look_around(a, tick)
            else:
                a.mode, a.until = "explore", tick + self.rng.randint(3, 12)
        elif a.mode == "explore":
            a.explored.add(a.room)
            self._look_around(a, tick)
        elif a.mode == "pursue":
            t = a.chasing
            a.chasing = None
            if t in self.remaining:
                self.remaining.discard(t)
            self.team.nodes[a.agent_id].note_found(t)
            a.sightings.pop(t, None)
            self._look_around(a, tick)
        elif a.mode == "idle":
            self._trigger(a, tick)

    # ------------------------------------------------------------- loop

    def run(self) -> FuzzOutcome:
        tick = 0
        for tick in range(self.max_ticks):
            # Crash at the drawn tick, or as soon as anyone closes in on a target so
            # that no run can finish crash-free.
            closing = any(a.mode == "pursue" for a in self.agents.values())
            due = self.crash_tick is not None and (tick >= self.crash_tick or closing)
            if due and self.crash_agent is None:
                lead = self.team.leader()
                if lead is None:
                    # Token in flight: the grant's addressee is the leader-to-be.
                    grants = [m.receiver for m in self.network.in_flight() if m.kind == LEADER_RESPONSE]
                    lead = grants[0] if grants else None
                if lead is not None:
                    self.crash_agent = lead
                    self.crash_tick = tick
                    self.team.crash(lead)
                    self.agents[lead].mode = "dead"
            self.team.pump(tick)
            for i, a in self.agents.items():
                if a.mode != "dead":
                    self._apply(a, tick)
            for i, a in self.agents.items():
                if a.mode != "dead":
                    self._advance(a, tick)
            self.team.pump(tick)
            for i, a in self.agents.items():
                if a.mode != "dead":
                    self._apply(a, tick)
            if self.network.idle():
                self.quiescent_checks += 1
                self.conflicts += [f"t={tick}: {c}" for c in self.team.conflicts()]
            if not self.remaining:
                break
        recoveries = [r for n in self.team.nodes.values() for r in n.recoveries]
        asked = all(r["order"] and r["order"][0] in r["lineage"] for r in recoveries)
        return FuzzOutcome(
            self.seed,
            self.n,
            self.latency,
            self.targets,
            self.crash_agent,
            self.crash_tick if self.crash_agent is not None else None,
            not self.remaining,
            tick,
            list(self.team.violations),
            self.conflicts,
            recoveries,
            asked,
            self.team.lineage_matches_log(),
            dict(self.network.sent),
            self.trigger_events,
            self.quiescent_checks,
        )


def run_corpus(seeds, crash: bool = False, **kwargs) -> tuple[list[FuzzOutcome], float]:
    start = time.perf_counter()
    outcomes = [AbstractEpisode(s, crash=crash, **kwargs).run() for s in seeds]
    return outcomes, time.perf_counter() - start
