"""Ground-truth gridworld: scenario loading, sensing, action dynamics and
sub-task adjudication.

Cells are ``(x, y)`` tuples with ``x`` the column and ``y`` the row; the
wall raster is indexed ``walls[y, x]``.  Headings are 12 discrete
directions in 30 degree steps, clockwise from north (heading 0 points to
``y - 1``, heading 3 to ``x + 1``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import yaml

Cell = tuple[int, int]

HEADINGS = 12
AXIS_VECTORS: dict[int, Cell] = {0: (0, -1), 3: (1, 0), 6: (0, 1), 9: (-1, 0)}
DEFAULT_SENSOR_RANGE = 5
DEFAULT_SUCCESS_RADIUS = 1
DEFAULT_DECLARE_COOLDOWN = 10

SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"


class Occupancy(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OBSTACLE = 2


class ScenarioError(ValueError):
    """Raised when a scenario document violates the schema or a world invariant.

    ``diagnostics`` holds one message per violation.
    """

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class AgentCrashed(RuntimeError):
    pass


@dataclass(frozen=True)
class RoomGT:
    room_id: str
    cells: frozenset[Cell]


@dataclass(frozen=True)
class ObjectInstance:
    cls: str
    cell: Cell
    room_id: str


@dataclass(frozen=True)
class AgentPose:
    cell: Cell
    heading: int = 0
    alive: bool = True


@dataclass(frozen=True)
class TargetSet:
    classes: tuple[str, ...]
    remaining: tuple[str, ...]

    def __post_init__(self):
        if not self.classes:
            raise ValueError("target set must contain at least one class")
        if not set(self.remaining) <= set(self.classes):
            raise ValueError("remaining targets must be a subset of classes")

    def without(self, cls: str) -> "TargetSet":
        return TargetSet(self.classes, tuple(c for c in self.remaining if c != cls))


@dataclass(frozen=True)
class Observation:
    agent_id: int
    visible_cells: tuple[tuple[Cell, Occupancy], ...]
    visible_objects: tuple[tuple[str, Cell], ...]
    pose: AgentPose
    tick: int


@dataclass(frozen=True)
class SubtaskOutcome:
    agent_id: int
    declared_class: str
    result: str  # "success" | "failure"
    tick: int


@dataclass(frozen=True)
class Action:
    kind: str
    target: str | None = None

    KINDS = ("forward", "turn_left", "turn_right", "declare", "no_op")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown action {self.kind!r}")
        if (self.kind == "declare") != (self.target is not None):
            raise ValueError("declare takes exactly one target class")

    def __str__(self):
        return f"declare:{self.target}" if self.kind == "declare" else self.kind

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text.startswith("declare:"):
            return cls("declare", text.split(":", 1)[1])
        return cls(text)


FORWARD = Action("forward")
TURN_LEFT = Action("turn_left")
TURN_RIGHT = Action("turn_right")
NO_OP = Action("no_op")


def declare(cls: str) -> Action:
    return Action("declare", cls)


@dataclass(frozen=True)
class Event:
    tick: int
    agent_id: int
    kind: str
    data: tuple[tuple[str, object], ...] = ()

    def to_dict(self) -> dict:
        return {"tick": self.tick, "agent": self.agent_id, "kind": self.kind, **dict(self.data)}


@dataclass(frozen=True, eq=False)
class World:
    name: str
    walls: np.ndarray
    resolution: float
    rooms: tuple[RoomGT, ...]
    objects: tuple[ObjectInstance, ...]
    agents: tuple[AgentPose, ...]
    targets: TargetSet
    rng_seed: int
    max_steps: int
    tick: int = 0
    done: bool = False
    sensor_range: int = DEFAULT_SENSOR_RANGE
    fov_deg: float = 360.0
    success_radius: int = DEFAULT_SUCCESS_RADIUS
    declare_cooldown: int = DEFAULT_DECLARE_COOLDOWN
    cooldown_until: tuple[int, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width)"""
        return self.walls.shape

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        h, w = self.walls.shape
        return 0 <= x < w and 0 <= y < h

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.walls[cell[1], cell[0]]

    def free_cells(self) -> list[Cell]:
        ys, xs = np.nonzero(~self.walls)
        return sorted(zip(xs.tolist(), ys.tolist()), key=lambda c: (c[1], c[0]))

    def room_of(self, cell: Cell) -> str | None:
        for room in self.rooms:
            if cell in room.cells:
                return room.room_id
        return None

    def with_agents(self, agents: Iterable[AgentPose]) -> "World":
        agents = tuple(agents)
        return dataclasses.replace(
            self, agents=agents, cooldown_until=tuple(self.cooldown_until[: len(agents)])
        )

    def crash(self, agent_id: int) -> "World":
        agents = list(self.agents)
        agents[agent_id] = dataclasses.replace(agents[agent_id], alive=False)
        return dataclasses.replace(self, agents=tuple(agents))

    def fingerprint(self) -> tuple:
        return (self.tick, self.done, self.agents, self.targets.remaining, self.cooldown_until)


# ---------------------------------------------------------------- loading


def default_max_steps(free_cells: int) -> int:
    return int(math.ceil(10 * math.sqrt(free_cells)))


def _rect_cells(rect: list[int]) -> list[Cell]:
    x0, y0, x1, y1 = rect
    return [(x, y) for y in range(min(y0, y1), max(y0, y1) + 1) for x in range(min(x0, x1), max(x0, x1) + 1)]


def _room_cells(parts) -> list[Cell]:
    cells: list[Cell] = []
    for part in parts:
        if isinstance(part, Mapping) and "rect" in part:
            cells.extend(_rect_cells(part["rect"]))
        elif isinstance(part, Mapping) and "cells" in part:
            cells.extend((int(x), int(y)) for x, y in part["cells"])
        elif isinstance(part, (list, tuple)) and len(part) == 4 and all(isinstance(v, int) for v in part):
            cells.extend(_rect_cells(list(part)))
        elif isinstance(part, (list, tuple)) and len(part) == 2:
            cells.append((int(part[0]), int(part[1])))
        else:
            raise ScenarioError([f"room entry {part!r} is neither a rect nor a cell list"])
    return cells


REQUIRED_KEYS = ("grid", "rooms", "objects", "agents", "targets")


def parse_scenario(doc: Mapping) -> tuple[World, list[str]]:
    """Build a world from a parsed scenario document and collect every
    invariant violation instead of stopping at the first one."""
    if not isinstance(doc, Mapping):
        raise ScenarioError(["scenario document must be a mapping"])
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise ScenarioError([f"missing key {k!r}" for k in missing])

    rows = doc["grid"]
    if isinstance(rows, str):
        rows = [r for r in rows.splitlines() if r.strip()]
    rows = [r.rstrip() for r in rows]
    width = max(len(r) for r in rows)
    bad = sorted({ch for r in rows for ch in r} - {"#", "."})
    if bad:
        raise ScenarioError([f"grid contains characters {bad}; only '#' and '.' are allowed"])
    walls = np.ones((len(rows), width), dtype=bool)
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            walls[y, x] = ch == "#"

    diags: list[str] = []
    h, w = walls.shape

    def free(c: Cell) -> bool:
        return 0 <= c[0] < w and 0 <= c[1] < h and not walls[c[1], c[0]]

    rooms: list[RoomGT] = []
    owner: dict[Cell, str] = {}
    for room_id, parts in (doc.get("rooms") or {}).items():
        room_id = str(room_id)
        cells = _room_cells(parts)
        for c in cells:
            if not free(c):
                diags.append(f"room {room_id} includes non-free cell {c}")
            elif c in owner and owner[c] != room_id:
                diags.append(f"rooms {owner[c]} and {room_id} overlap at cell {c}")
            else:
                owner[c] = room_id
        rooms.append(RoomGT(room_id, frozenset(c for c in cells if free(c))))
    unassigned = [c for c in ((x, y) for y in range(h) for x in range(w)) if free(c) and c not in owner]
    for c in unassigned:
        diags.append(f"free cell {c} belongs to no room")

    objects: list[ObjectInstance] = []
    for i, obj in enumerate(doc.get("objects") or []):
        cell = (int(obj["x"]), int(obj["y"]))
        if not free(cell):
            diags.append(f"object {obj['class']} on non-free cell {cell}")
        objects.append(ObjectInstance(str(obj["class"]), cell, owner.get(cell, "")))

    agents: list[AgentPose] = []
    for i, a in enumerate(doc.get("agents") or []):
        cell = (int(a["x"]), int(a["y"]))
        heading = int(a.get("heading", 0))
        if not free(cell):
            diags.append(f"agent {i} on non-free cell {cell}")
        if not 0 <= heading < HEADINGS:
            diags.append(f"agent {i} heading {heading} outside [0, {HEADINGS})")
        agents.append(AgentPose(cell, heading % HEADINGS))
    if not agents:
        diags.append("scenario has no agents")

    classes = tuple(str(t) for t in doc.get("targets") or [])
    if not classes:
        diags.append("target set is empty")
    present = {o.cls for o in objects}
    for t in classes:
        if t not in present:
            diags.append(f"target {t} has no instance among objects")

    free_count = int((~walls).sum())
    max_steps = int(doc.get("max_steps") or default_max_steps(free_count))
    world = World(
        name=str(doc.get("name", "scenario")),
        walls=walls,
        resolution=float(doc.get("resolution_m", 0.25)),
        rooms=tuple(rooms),
        objects=tuple(objects),
        agents=tuple(agents),
        targets=TargetSet(classes or ("?",), classes or ("?",)),
        rng_seed=int(doc.get("seed", 0)),
        max_steps=max_steps,
        sensor_range=int(doc.get("sensor_range", DEFAULT_SENSOR_RANGE)),
        cooldown_until=tuple(0 for _ in agents),
    )
    return world, diags


def load_scenario(source: str | Path | Mapping) -> World:
    """Load a scenario from a mapping, a YAML string, a file path, or the
    name of a bundled fixture (``"house3"``)."""
    doc = _read_document(source)
    world, diags = parse_scenario(doc)
    if diags:
        raise ScenarioError(diags)
    return world


def _read_document(source) -> Mapping:
    if isinstance(source, Mapping):
        return source
    path = resolve_scenario_path(source) if not (isinstance(source, str) and "\n" in source) else None
    text = path.read_text() if path is not None else str(source)
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"scenario is not valid YAML: {exc}"]) from exc


def resolve_scenario_path(source: str | Path) -> Path:
    path = Path(source)
    if path.exists():
        return path
    for candidate in (SCENARIO_DIR / path.name, SCENARIO_DIR / f"{path.name}.scn"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"scenario {source} not found")


# ---------------------------------------------------------------- sensing


def heading_vector(heading: int) -> tuple[float, float]:
    angle = math.radians(30 * (heading % HEADINGS))
    return math.sin(angle), -math.cos(angle)


def line_cells(a: Cell, b: Cell) -> list[Cell]:
    """Bresenham cells from ``a`` to ``b`` inclusive."""
    x0, y0 = a
    x1, y1 = b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = [(x0, y0)]
    while (x0, y0) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
        out.append((x0, y0))
    return out


def in_fov(origin: Cell, heading: int, cell: Cell, fov_deg: float) -> bool:
    if fov_deg >= 360 or cell == origin:
        return True
    hx, hy = heading_vector(heading)
    vx, vy = cell[0] - origin[0], cell[1] - origin[1]
    cos = (hx * vx + hy * vy) / math.hypot(vx, vy)
    return cos >= math.cos(math.radians(fov_deg / 2)) - 1e-12


def visible_cells(walls: np.ndarray, origin: Cell, heading: int, sensor_range: int, fov_deg: float) -> list[Cell]:
    h, w = walls.shape
    ox, oy = origin
    out = []
    for y in range(max(0, oy - sensor_range), min(h, oy + sensor_range + 1)):
        for x in range(max(0, ox - sensor_range), min(w, ox + sensor_range + 1)):
            if not in_fov(origin, heading, (x, y), fov_deg):
                continue
            ray = line_cells(origin, (x, y))
            if all(not walls[cy, cx] for cx, cy in ray[1:-1]):
                out.append((x, y))
    return out


def sense(world: World, agent_id: int, *, fov_deg: float | None = None, heading: int | None = None) -> Observation:
    """Observe from an agent's pose; never mutates ``world``."""
    if not 0 <= agent_id < len(world.agents):
        raise KeyError(f"unknown agent {agent_id}")
    pose = world.agents[agent_id]
    if not pose.alive:
        raise AgentCrashed(f"agent crashed: {agent_id}")
    heading = pose.heading if heading is None else heading
    fov = world.fov_deg if fov_deg is None else fov_deg
    cells = visible_cells(world.walls, pose.cell, heading, world.sensor_range, fov)
    vis = tuple((c, Occupancy.OBSTACLE if world.walls[c[1], c[0]] else Occupancy.FREE) for c in cells)
    seen = set(cells)
    objs = tuple((o.cls, o.cell) for o in world.objects if o.cell in seen)
    return Observation(agent_id, vis, objs, pose, world.tick)


# ---------------------------------------------------------------- dynamics


def within_success_radius(world: World, cell: Cell, cls: str) -> bool:
    r = world.success_radius
    return any(
        o.cls == cls and abs(o.cell[0] - cell[0]) + abs(o.cell[1] - cell[1]) <= r for o in world.objects
    )


def step(world: World, actions: Mapping[int, Action]) -> tuple[World, list[Event]]:
    """Apply one lockstep tick.  Actions run in ascending agent id order."""
    tick = world.tick
    events: list[Event] = []
    if world.done:
        return world, [Event(tick, -1, "episode_done")]
    agents = list(world.agents)
    targets = world.targets
    cooldown = list(world.cooldown_until) or [0] * len(agents)
    for agent_id in sorted(actions):
        action = actions[agent_id]
        if not 0 <= agent_id < len(agents):
            events.append(Event(tick, agent_id, "rejected", (("reason", "unknown agent"),)))
            continue
        pose = agents[agent_id]
        if not pose.alive:
            events.append(Event(tick, agent_id, "rejected", (("reason", "agent crashed"),)))
            continue
        if action.kind == "forward":
            vec = AXIS_VECTORS.get(pose.heading)
            nxt = (pose.cell[0] + vec[0], pose.cell[1] + vec[1]) if vec else None
            if nxt is not None and world.is_free(nxt):
                agents[agent_id] = dataclasses.replace(pose, cell=nxt)
                events.append(Event(tick, agent_id, "move", (("cell", nxt),)))
            else:
                reason = "wall" if vec else "diagonal heading"
                events.append(Event(tick, agent_id, "bump", (("reason", reason),)))
        elif action.kind in ("turn_left", "turn_right"):
            delta = 1 if action.kind == "turn_right" else -1
            agents[agent_id] = dataclasses.replace(pose, heading=(pose.heading + delta) % HEADINGS)
            events.append(Event(tick, agent_id, "turn", (("heading", agents[agent_id].heading),)))
        elif action.kind == "declare":
            if tick < cooldown[agent_id]:
                events.append(Event(tick, agent_id, "declare_cooldown", (("class", action.target),)))
                continue
            ok = action.target in targets.remaining and within_success_radius(world, pose.cell, action.target)
            outcome = SubtaskOutcome(agent_id, action.target, "success" if ok else "failure", tick)
            if ok:
                targets = targets.without(action.target)
            else:
                cooldown[agent_id] = tick + world.declare_cooldown
            events.append(Event(tick, agent_id, "declare", (("class", action.target), ("result", outcome.result))))
    new_tick = tick + 1
    done = not targets.remaining or new_tick >= world.max_steps
    if done:
        events.append(Event(new_tick, -1, "episode_done", (("remaining", targets.remaining),)))
    new_world = dataclasses.replace(
        world, agents=tuple(agents), targets=targets, tick=new_tick, done=done, cooldown_until=tuple(cooldown)
    )
    return new_world, events


def outcomes(events: Iterable[Event]) -> list[SubtaskOutcome]:
    out = []
    for e in events:
        if e.kind == "declare":
            d = dict(e.data)
            out.append(SubtaskOutcome(e.agent_id, d["class"], d["result"], e.tick))
    return out


def validate_document(source) -> list[str]:
    try:
        doc = _read_document(source)
        _, diags = parse_scenario(doc)
    except ScenarioError as exc:
        return exc.diagnostics
    except (KeyError, TypeError, ValueError) as exc:
        return [f"schema violation: {exc}"]
    return diags
