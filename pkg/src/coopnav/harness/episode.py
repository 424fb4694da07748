"""Grid-level episodes: every agent senses, maps, segments rooms, asks the
leader for help when its room is done, and walks where it is told.

One tick runs sense -> integrate -> segment -> trigger check -> protocol ->
plan -> act for all live agents in ascending id order.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..mapping import SemanticMap, integrate_inplace
from ..motion import (
    DEFAULT_CAMERA_FOV,
    INF,
    NoTopoPath,
    Panorama,
    PanoramaLog,
    PlanState,
    Trapped,
    advance,
    fmm,
    next_action,
    plan_route,
)
from ..oracle import AgentView, NoCandidateRooms, Oracle, RoomOption, RoomSummary, make_oracle
from ..protocol import AgentReport, Network, Team
from ..rooms import (
    RemoteDescriber,
    RoomSegment,
    RuleDescriber,
    RoomUnseen,
    best_frame,
    describe,
    is_explored,
    load_cooccurrence,
    map_frame,
    segment,
)
from ..state import RoomInfo, frontier_room, is_frontier
from ..topology import TopoGraph, extract
from ..world import (
    NO_OP,
    Action,
    Cell,
    World,
    _read_document,
    declare,
    load_scenario,
    resolve_scenario_path,
    sense,
    step,
)
from . import trace as tracefile

IDLE_RETRY = 20
FAR = 10_000.0


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def parse_crash_schedule(text: str | list | None) -> tuple[tuple[str, int], ...]:
    """``"0:50,leader:80"`` -> ``(("0", 50), ("leader", 80))``."""
    if not text:
        return ()
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for item in items:
        who, sep, tick = str(item).strip().partition(":")
        if not sep or not tick.strip().lstrip("-").isdigit():
            raise ConfigError(f"bad crash entry {item!r}; expected agent:tick")
        who = who.strip()
        if who != "leader" and not who.isdigit():
            raise ConfigError(f"bad crash agent {who!r}; expected an id or 'leader'")
        if int(tick) < 0:
            raise ConfigError(f"crash tick must be non-negative in {item!r}")
        out.append((who, int(tick)))
    return tuple(sorted(out, key=lambda c: (c[1], c[0])))


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    team_size: int | None = None
    oracle: str = "rule"
    describer: str = "rule"
    latency: int = 1
    crash: tuple[tuple[str, int], ...] = ()
    seed: int | None = None
    output_dir: str | None = None
    max_steps: int | None = None
    describer_endpoint: str | None = None

    FIELDS = (
        "scenario",
        "team_size",
        "oracle",
        "describer",
        "latency",
        "crash",
        "seed",
        "output_dir",
        "max_steps",
        "describer_endpoint",
    )

    @classmethod
    def from_mapping(cls, doc: dict, base: Path | None = None) -> "RunConfig":
        unknown = sorted(set(doc) - set(cls.FIELDS))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "scenario" not in doc:
            raise ConfigError("config needs a scenario")
        kw = dict(doc)
        kw["crash"] = parse_crash_schedule(kw.get("crash"))
        scen = str(kw["scenario"])
        if base is not None and not Path(scen).is_absolute() and (base / scen).exists():
            scen = str(base / scen)
        kw["scenario"] = scen
        if kw.get("output_dir") and base is not None and not Path(kw["output_dir"]).is_absolute():
            kw["output_dir"] = str(base / kw["output_dir"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        doc = yaml.safe_load(path.read_text())
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_mapping(doc, path.parent)

    def validate(self, world: World | None = None) -> World:
        if self.oracle not in ("rule", "remote"):
            raise ConfigError(f"oracle must be rule or remote, not {self.oracle!r}")
        if self.describer not in ("rule", "remote"):
            raise ConfigError(f"describer must be rule or remote, not {self.describer!r}")
        if self.describer == "remote" and not self.describer_endpoint:
            raise ConfigError("remote describer needs describer_endpoint")
        if self.latency < 0:
            raise ConfigError("latency must be non-negative")
        try:
            resolve_scenario_path(self.scenario)
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
        world = world or load_scenario(self.scenario)
        n = self.team_size if self.team_size is not None else len(world.agents)
        if not 1 <= n <= len(world.agents):
            raise ConfigError(f"team size {n} outside 1..{len(world.agents)} agent slots")
        for who, _ in self.crash:
            if who != "leader" and int(who) >= n:
                raise ConfigError(f"crash names agent {who} but the team has {n}")
        return world

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.FIELDS}
        d["crash"] = [f"{w}:{t}" for w, t in self.crash]
        return d


# ---------------------------------------------------------------- report


@dataclass
class TargetOutcome:
    target: str
    result: str  # success | failure | timeout
    tick: int | None
    agent: int | None


@dataclass
class EpisodeReport:
    scenario: str
    seed: int
    team_size: int
    targets: list[TargetOutcome]
    ticks: int
    max_steps: int
    path_length: dict[int, int]
    messages: dict[str, int]
    total_messages: int
    broadcast_baseline: int
    trigger_events: int
    handoffs: int
    lineage: list[int]
    recoveries: int
    crashes: list[tuple[int, int]]
    oracle_degradations: int
    describer_degradations: int
    leader_violations: list[str]
    conflict_violations: list[str]
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def successes(self) -> int:
        return sum(1 for t in self.targets if t.result == "success")

    @property
    def completed(self) -> bool:
        return self.successes == len(self.targets)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["path_length"] = {str(k): v for k, v in self.path_length.items()}
        d["successes"] = self.successes
        d["completed"] = self.completed
        return d


# ---------------------------------------------------------------- agents


@dataclass
class AgentBrain:
    agent_id: int
    smap: SemanticMap
    segments: list[RoomSegment] = field(default_factory=list)
    map_version: int = 0
    graph: TopoGraph | None = None
    graph_version: int = -1
    mode: str = "explore"  # explore | travel | frontier | wait | idle | panorama | dead
    goal: str | None = None
    focus: frozenset = frozenset()
    plan: PlanState | None = None
    panorama: Panorama | None = None
    pano_log: PanoramaLog = field(default_factory=PanoramaLog)
    frames: list = field(default_factory=list)
    retry_at: int = 0
    sightings: dict[str, Cell] = field(default_factory=dict)
    path_length: int = 0

    def topo(self) -> TopoGraph:
        if self.graph is None or self.graph_version != self.map_version:
            self.graph = extract(self.smap)
            self.graph_version = self.map_version
        return self.graph


class Episode:
    def __init__(self, config: RunConfig, oracle: Oracle | None = None):
        self.config = config
        world = config.validate()
        n = config.team_size if config.team_size is not None else len(world.agents)
        world = world.with_agents(world.agents[:n])
        if config.max_steps is not None:
            world = dataclasses.replace(world, max_steps=config.max_steps)
        self.world = world
        self.doc = _read_document(config.scenario)
        self.seed = config.seed if config.seed is not None else world.rng_seed
        self.table = load_cooccurrence()
        self.oracle = oracle or make_oracle(config.oracle)
        self.describer = (
            RemoteDescriber(config.describer_endpoint) if config.describer == "remote" else RuleDescriber(self.table)
        )
        self.describer_degradations = 0
        self.goals = world.targets.classes
        self.n = n
        self.brains = {i: AgentBrain(i, SemanticMap.empty(world.shape)) for i in range(n)}
        for i in range(n):
            self._sense(i)
        rng = random.Random(self.seed)
        self.network = Network.random(rng, config.latency) if config.latency else Network(0)
        descriptions = {i: self._room_infos(i) for i in range(n)}
        poses = {i: self._pose(i) for i in range(n)}
        self.team = Team.create(range(n), self.goals, self.network, self.oracle, descriptions, poses)
        self._init_focus()
        self.crashes: list[tuple[int, int]] = []
        self.trigger_events = 0
        self.baseline = 0
        self.declarations: list[dict] = []
        self.conflicts: list[str] = []
        self.trace = tracefile.TraceWriter()
        self.trajectories: dict[int, list[Cell]] = {i: [world.agents[i].cell] for i in range(n)}
        self.message_curve: list[tuple[int, int, int]] = []

    def _init_focus(self) -> None:
        for i, b in self.brains.items():
            seg = self._segment_at(b, self.world.agents[i].cell)
            b.focus = seg.mask if seg is not None else frozenset()

    # ------------------------------------------------------------ perception

    def _pose(self, i: int) -> tuple[int, int, int]:
        p = self.world.agents[i]
        return (p.cell[0], p.cell[1], p.heading)

    def _sense(self, i: int) -> None:
        b = self.brains[i]
        if integrate_inplace(b.smap, sense(self.world, i)):
            b.map_version += 1
            prefix = f"a{i}:room-"
            b.segments = segment(b.smap, b.segments, id_prefix=prefix)
            b.plan = None

    def _segment_at(self, b: AgentBrain, cell: Cell) -> RoomSegment | None:
        for seg in b.segments:
            if cell in seg.mask:
                return seg
        return None

    def _describe(self, b: AgentBrain, seg: RoomSegment):
        try:
            frame = best_frame(seg, b.frames)
        except RoomUnseen:
            frame = map_frame(b.agent_id, seg, b.smap, self.world.tick)
        desc = describe(seg, frame, self.describer, self.goals)
        if desc.degraded:
            self.describer_degradations += 1
        return desc

    def _room_infos(self, i: int) -> tuple[RoomInfo, ...]:
        b = self.brains[i]
        out = []
        for seg in b.segments:
            desc = self._describe(b, seg)
            objects = tuple(sorted(b.smap.objects_in(seg.mask)))
            out.append(RoomInfo(seg.room_id, desc.label, objects, seg.mask, is_explored(seg), desc.likely_targets))
        return tuple(out)

    # ------------------------------------------------------------ helpers

    def _node(self, i: int):
        return self.team.nodes[i]

    def _claimable(self, i: int, t: str) -> bool:
        local = self._node(i).local
        if t not in local.remaining():
            return False
        return local.holder(t) in (None, i)

    def _passable(self, b: AgentBrain) -> np.ndarray:
        free = b.smap.free_mask().copy()
        state = self._node(b.agent_id).state
        if state is not None:
            for room in state.rooms:
                for x, y in room.cells:
                    free[y, x] = True
        return free

    def _field_to(self, space, cells) -> Any:
        cells = [c for c in cells if space[c[1], c[0]]]
        if not cells:
            return None
        return fmm(space, cells)

    def _move(self, i: int, field) -> Action | None:
        """Greedy step on ``field``; None when the pose is cut off from it."""
        if field is None:
            return None
        pose = self.world.agents[i]
        try:
            return next_action(pose.cell, pose.heading, field)
        except Trapped:
            return None

    def _target_cells(self, b: AgentBrain, t: str) -> list[Cell]:
        r = self.world.success_radius
        free = b.smap.free_mask()
        h, w = free.shape
        out = set()
        for ox, oy in b.smap.semantics.get(t, ()):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    x, y = ox + dx, oy + dy
                    if abs(dx) + abs(dy) <= r and 0 <= x < w and 0 <= y < h and free[y, x]:
                        out.add((x, y))
        return sorted(out)

    # ------------------------------------------------------------ decisions

    def _pursue(self, i: int) -> Action | None:
        b = self.brains[i]
        best = None
        for t in self.goals:
            if t not in b.smap.semantics or t not in self._node(i).local.remaining():
                continue
            if not self._claimable(i, t):
                b.sightings[t] = min(b.smap.semantics[t])
                continue
            field = self._field_to(b.smap.free_mask(), self._target_cells(b, t))
            if field is None:
                continue
            d = field.at(self.world.agents[i].cell)
            if math.isfinite(d) and (best is None or (d, t) < best[:2]):
                best = (d, t, field)
        if best is None:
            return None
        d, t, field = best
        b.sightings.pop(t, None)
        if d == 0.0:
            return declare(t)
        return self._move(i, field)

    def _frontier_field(self, b: AgentBrain, within=None):
        cells = b.smap.frontier_cells(within)
        return self._field_to(b.smap.free_mask(), cells) if cells else None

    def _apply_directives(self, i: int) -> None:
        b = self.brains[i]
        for d in self._node(i).take_directives():
            action = d.directive.action
            b.plan = None
            if is_frontier(action):
                b.mode, b.goal = "frontier", action
            else:
                room = self._node(i).state.room(action)
                if room is None:
                    b.mode, b.goal = "frontier", frontier_room(i)
                else:
                    b.mode, b.goal, b.focus = "travel", action, room.cells

    def _travel(self, i: int) -> Action | None:
        b = self.brains[i]
        cell = self.world.agents[i].cell
        room = self._node(i).state.room(b.goal) if b.goal else None
        if room is None:
            b.mode = "frontier"
            return None
        b.focus = room.cells
        if cell in room.cells:
            return self._arrive(i)
        if b.plan is None or b.plan.target_room != b.goal:
            try:
                free = b.smap.free_mask()
                inside = [c for c in room.cells if free[c[1], c[0]]]
                b.plan = plan_route(b.topo(), b.smap, cell, b.goal, inside, b.map_version) if inside else None
            except (NoTopoPath, LookupError, ValueError):
                b.plan = None
        if b.plan is not None:
            try:
                if advance(b.plan, b.topo(), b.smap, cell):
                    return self._arrive(i)
                act = self._move(i, b.plan.field)
                if act is not None and act != NO_OP:
                    return act
            except (LookupError, ValueError):
                pass
            b.plan = None
        act = self._move(i, self._field_to(self._passable(b), room.cells))
        if act is not None and act != NO_OP:
            return act
        # The room is out of reach in what this agent knows: widen the map.
        return self._move(i, self._frontier_field(b))

    def _arrive(self, i: int) -> Action | None:
        b = self.brains[i]
        cell = self.world.agents[i].cell
        b.plan = None
        b.mode = "explore"
        if b.graph is not None and b.graph.at(cell) is not None and b.pano_log.due(cell, self.world.tick):
            b.pano_log.mark(cell, self.world.tick)
            b.panorama = Panorama(i, cell, DEFAULT_CAMERA_FOV)
            b.mode = "panorama"
            return b.panorama.next_action()
        return None

    def _explore(self, i: int) -> Action | None:
        b = self.brains[i]
        focus = set(b.focus)
        for seg in b.segments:
            if seg.mask & b.focus:
                focus |= seg.mask
        act = self._move(i, self._frontier_field(b, focus))
        if act is not None and act != NO_OP:
            return act
        return self._trigger(i)

    def _go_frontier(self, i: int) -> Action | None:
        b = self.brains[i]
        field = self._frontier_field(b)
        act = self._move(i, field)
        if act is None:
            # Nothing left to uncover.
            b.mode, b.retry_at = "idle", self.world.tick + IDLE_RETRY
            return NO_OP
        if act == NO_OP:
            seg = self._segment_at(b, self.world.agents[i].cell)
            b.focus = seg.mask if seg is not None else frozenset({self.world.agents[i].cell})
            b.mode = "explore"
            return self._explore(i)
        return act

    def _options(self, i: int) -> tuple[RoomOption, ...]:
        b = self.brains[i]
        node = self._node(i)
        pose = self.world.agents[i].cell
        dist_field = fmm(self._passable(b), [pose])
        claim = {t for t in self.goals if self._claimable(i, t)}
        local_done = {s.room_id for s in b.segments if is_explored(s)}

        def dist(cells) -> float:
            d = min((dist_field.at(c) for c in cells), default=INF)
            if math.isfinite(d):
                return round(d, 6)
            return float(min(abs(pose[0] - x) + abs(pose[1] - y) for x, y in cells))

        options: dict[str, RoomOption] = {}
        covered: set[str] = set()
        for room in node.state.rooms:
            mine = [s for s in b.segments if s.mask & room.cells]
            covered |= {s.room_id for s in mine}
            seen_all = bool(mine) and all(s.room_id in local_done for s in mine) and room.cells <= set().union(
                *(s.mask for s in mine)
            )
            if (room.explored or seen_all) and not claim & set(room.objects):
                continue
            options[room.room_id] = RoomOption(room.room_id, room.label, dist(room.cells), room.objects)
        for s in b.segments:
            if s.room_id in covered or s.room_id in local_done:
                continue
            desc = self._describe(b, s)
            objects = tuple(sorted(b.smap.objects_in(s.mask)))
            options[s.room_id] = RoomOption(s.room_id, desc.label, dist(s.mask), objects)
        frontier = b.smap.frontier_cells()
        fdist = dist(frontier) if frontier else FAR
        fid = frontier_room(i)
        options[fid] = RoomOption(fid, self.table.unknown_label, fdist)
        return tuple(options.values())

    def _trigger(self, i: int) -> Action:
        b = self.brains[i]
        node = self._node(i)
        tick = self.world.tick
        pose = self._pose(i)
        here = self._segment_at(b, pose[:2])
        view = AgentView(
            pose,
            here.room_id if here else None,
            tuple(
                RoomSummary(s.room_id, self._describe(b, s).label, tuple(sorted(b.smap.objects_in(s.mask))), is_explored(s))
                for s in b.segments
            ),
            tuple(sorted(b.sightings.items())),
        )
        try:
            proposal = node.make_proposal(view, self._options(i))
        except NoCandidateRooms:
            b.mode, b.retry_at = "idle", tick + IDLE_RETRY
            return NO_OP
        report = AgentReport(
            i,
            pose,
            self._room_infos(i),
            tuple(t for t in self.goals if t not in node.local.remaining()),
            tuple(sorted(b.sightings.items())),
        )
        node.pose = pose
        alive = len(self.team.alive())
        self.trigger_events += 1
        self.baseline += alive * (alive - 1)
        b.mode = "wait"
        self.team.request(i, proposal, report, tick)
        self._apply_directives(i)
        return NO_OP

    def decide(self, i: int) -> Action:
        b = self.brains[i]
        self._apply_directives(i)
        if b.mode == "panorama":
            return b.panorama.next_action()
        act = self._pursue(i)
        if act is not None:
            return act
        if b.mode == "wait":
            return NO_OP
        if b.mode == "idle":
            if self.world.tick >= b.retry_at:
                return self._trigger(i)
            return NO_OP
        if b.mode == "travel":
            act = self._travel(i)
            if act is not None:
                return act
        if b.mode == "frontier":
            return self._go_frontier(i)
        if b.mode == "explore":
            return self._explore(i)
        if b.mode == "panorama":
            return b.panorama.next_action()
        return NO_OP

    # ------------------------------------------------------------ loop

    def _crash_due(self, tick: int) -> None:
        for who, at in self.config.crash:
            if at != tick:
                continue
            target = self.team.leader() if who == "leader" else int(who)
            if target is None or not self.world.agents[target].alive:
                continue
            self.world = self.world.crash(target)
            self.team.crash(target)
            self.brains[target].mode = "dead"
            self.crashes.append((target, tick))

    def _after_step(self, events) -> None:
        for e in events:
            if e.kind == "move":
                self.brains[e.agent_id].path_length += 1
                self.trajectories[e.agent_id].append(dict(e.data)["cell"])
            elif e.kind == "declare":
                d = dict(e.data)
                self.declarations.append({"tick": e.tick, "agent": e.agent_id, "class": d["class"], "result": d["result"]})
                node = self._node(e.agent_id)
                # Either we found it or a teammate beat us to it: both mean "found".
                node.note_found(d["class"])
        for i, b in self.brains.items():
            if b.mode == "panorama" and self.world.agents[i].alive:
                frame, _ = b.panorama.record(self.world)
                b.frames.append(frame)
                if b.panorama.finished:
                    b.panorama = None
                    b.mode = "explore"

    def run(self) -> EpisodeReport:
        start = time.perf_counter()
        # Where outputs land has no bearing on the run, so keep it out of the trace.
        cfg = {k: v for k, v in self.config.to_dict().items() if k != "output_dir"}
        self.trace.write(tracefile.header(cfg, self.doc, self.seed, self.n, self.world.max_steps))
        log_pos = 0
        while not self.world.done:
            tick = self.world.tick
            self._crash_due(tick)
            samples_pos = len(self.team.token_samples)
            self.team.pump(tick)
            alive = [i for i in range(self.n) if self.world.agents[i].alive]
            for i in alive:
                self._sense(i)
            actions = {i: self.decide(i) for i in alive}
            poses = [self._pose(i) + (int(self.world.agents[i].alive),) for i in range(self.n)]
            maps = [self.brains[i].smap.digest() for i in range(self.n)]
            modes = [self.brains[i].mode for i in range(self.n)]
            self.team.pump(tick)
            self.world, events = step(self.world, actions)
            self._after_step(events)
            quiet = self.network.idle()
            conflicts = self.team.conflicts() if quiet else []
            self.conflicts += [f"t={tick}: {c}" for c in conflicts]
            lead = self.team.leader()
            new_log = self.network.log[log_pos:]
            log_pos = len(self.network.log)
            self.message_curve.append((tick, self.network.total_sent(), self.baseline))
            self.trace.write(
                {
                    "type": "tick",
                    "tick": tick,
                    "poses": poses,
                    "actions": {str(i): str(a) for i, a in sorted(actions.items())},
                    "modes": modes,
                    "maps": maps,
                    "events": [e.to_dict() for e in events],
                    "messages": [r.line() for r in new_log],
                    "leader": lead,
                    "lineage": list(self._node(lead).lineage) if lead is not None else None,
                    "tokens": [list(s) for s in self.team.token_samples[samples_pos:]],
                    "quiescent": quiet,
                    "registry": self._registry_view(lead) if quiet else None,
                    "remaining": list(self.world.targets.remaining),
                }
            )
        report = self._report(time.perf_counter() - start)
        self.trace.write({"type": "summary", "report": _deterministic(report)})
        return report

    def _registry_view(self, lead: int | None) -> dict | None:
        if lead is None:
            return None
        node = self._node(lead)
        return {
            "assigned": {str(e.agent_id): e.assigned_room for e in node.state.agents if e.alive},
            "locks": {str(e.agent_id): list(e.locks) for e in node.state.agents},
            "progress_locks": {t: h for t, h in sorted(node.progress.locks().items())},
        }

    def _report(self, seconds: float) -> EpisodeReport:
        outcomes = []
        for t in self.goals:
            mine = [d for d in self.declarations if d["class"] == t]
            win = next((d for d in mine if d["result"] == "success"), None)
            if win:
                outcomes.append(TargetOutcome(t, "success", win["tick"], win["agent"]))
            elif mine:
                outcomes.append(TargetOutcome(t, "failure", mine[-1]["tick"], mine[-1]["agent"]))
            else:
                outcomes.append(TargetOutcome(t, "timeout", None, None))
        lead = self.team.leader()
        lineage = list(self._node(lead).lineage) if lead is not None else list(self.team.leader_log)
        recoveries = sum(len(n.recoveries) for n in self.team.nodes.values())
        return EpisodeReport(
            scenario=self.world.name,
            seed=self.seed,
            team_size=self.n,
            targets=outcomes,
            ticks=self.world.tick,
            max_steps=self.world.max_steps,
            path_length={i: b.path_length for i, b in self.brains.items()},
            messages=dict(self.network.sent),
            total_messages=self.network.total_sent(),
            broadcast_baseline=self.baseline,
            trigger_events=self.trigger_events,
            handoffs=len(lineage) - 1,
            lineage=lineage,
            recoveries=recoveries,
            crashes=list(self.crashes),
            oracle_degradations=getattr(self.oracle, "degradations", 0),
            describer_degradations=self.describer_degradations,
            leader_violations=list(self.team.violations),
            conflict_violations=list(self.conflicts),
            wall_clock=seconds,
        )


def _deterministic(report: EpisodeReport) -> dict:
    d = report.to_dict()
    d.pop("wall_clock")
    return d


# ---------------------------------------------------------------- outputs


def write_outputs(episode: Episode, report: EpisodeReport, out_dir: str | Path) -> dict[str, Path]:
    from . import plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "messages": out / "messages.tsv",
        "targets": out / "targets.tsv",
        "trace": out / "trace.jsonl",
        "trajectories": out / "trajectories.png",
        "economy": out / "messages.png",
    }
    paths["report"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["messages"].write_text(episode.network.log_text())
    rows = ["target\tresult\ttick\tagent"] + [
        f"{t.target}\t{t.result}\t{'' if t.tick is None else t.tick}\t{'' if t.agent is None else t.agent}"
        for t in report.targets
    ]
    paths["targets"].write_text("\n".join(rows) + "\n")
    paths["trace"].write_text(episode.trace.text())
    plots.trajectories(episode.world, episode.trajectories, paths["trajectories"])
    plots.economy(episode.message_curve, paths["economy"])
    return paths


def run_episode(config: RunConfig, oracle: Oracle | None = None) -> EpisodeReport:
    """Run one episode; with ``config.output_dir`` set, also write the report,
    message log, trace and figures there."""
    episode = Episode(config, oracle)
    report = episode.run()
    if config.output_dir:
        write_outputs(episode, report, config.output_dir)
    return report
