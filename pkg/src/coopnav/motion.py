"""Room-to-room motion: entry waypoint choice, Dijkstra over the topological
graph, Fast Marching travel-time fields and discrete action emission."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .mapping import SemanticMap
from .rooms import FrameRecord, PANORAMA_FRAMES
from .topology import TopoGraph
from .world import (
    AXIS_VECTORS,
    FORWARD,
    HEADINGS,
    NO_OP,
    TURN_LEFT,
    TURN_RIGHT,
    Action,
    Cell,
    Observation,
    World,
    sense,
    step,
)

INF = math.inf
PANORAMA_COOLDOWN = 25
DEFAULT_CAMERA_FOV = 90.0

# N, E, S, W with their headings; this is also the tie-break order.
_STEPS = ((0, (0, -1)), (3, (1, 0)), (6, (0, 1)), (9, (-1, 0)))


class NoTopoPath(LookupError):
    pass


class Trapped(RuntimeError):
    pass


@dataclass
class DistanceField:
    values: np.ndarray
    goal_cells: frozenset[Cell]

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[1], cell[0]])

    def checksum(self) -> str:
        import hashlib

        finite = np.where(np.isfinite(self.values), np.round(self.values, 9), -1.0)
        return hashlib.sha256(finite.tobytes()).hexdigest()[:16]


@dataclass
class PlanState:
    target_room: str
    entry_waypoint: int
    topo_path: list[int]
    mid_term_goal: int
    field: DistanceField | None = None
    graph_version: int = 0


def _passable(space) -> np.ndarray:
    if isinstance(space, SemanticMap):
        return space.free_mask()
    return np.asarray(space, dtype=bool)


def fmm(space, goal_cells: Iterable[Cell]) -> DistanceField:
    """First-order upwind Fast Marching solve of |grad T| = 1 on passable cells.

    ``space`` is a SemanticMap (known-free cells are passable) or a boolean
    passability array indexed ``[y, x]``.
    """
    passable = _passable(space)
    goals = frozenset(tuple(g) for g in goal_cells)
    if not goals:
        raise ValueError("fmm needs at least one goal cell")
    h, w = passable.shape
    for gx, gy in goals:
        if not (0 <= gx < w and 0 <= gy < h and passable[gy, gx]):
            raise ValueError(f"goal cell {(gx, gy)} is not passable")
    t = np.full((h, w), INF)
    accepted = np.zeros((h, w), dtype=bool)
    heap: list[tuple[float, int, int]] = []
    for gx, gy in goals:
        t[gy, gx] = 0.0
        heapq.heappush(heap, (0.0, gy, gx))
    while heap:
        val, y, x = heapq.heappop(heap)
        if accepted[y, x] or val > t[y, x]:
            continue
        accepted[y, x] = True
        for _, (dx, dy) in _STEPS:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h) or accepted[ny, nx] or not passable[ny, nx]:
                continue
            a = min(_known(t, accepted, nx - 1, ny), _known(t, accepted, nx + 1, ny))
            b = min(_known(t, accepted, nx, ny - 1), _known(t, accepted, nx, ny + 1))
            lo, hi = min(a, b), max(a, b)
            if hi - lo >= 1.0:
                cand = lo + 1.0
            else:
                cand = 0.5 * (a + b + math.sqrt(2.0 - (a - b) ** 2))
            if cand < t[ny, nx]:
                t[ny, nx] = cand
                heapq.heappush(heap, (cand, ny, nx))
    return DistanceField(t, goals)


def _known(t: np.ndarray, accepted: np.ndarray, x: int, y: int) -> float:
    h, w = t.shape
    if 0 <= x < w and 0 <= y < h and accepted[y, x]:
        return t[y, x]
    return INF


def dijkstra(graph: TopoGraph | dict[int, dict[int, int]], src: int, dst: int) -> list[int]:
    """Minimum-length waypoint path; equal-cost paths resolve to the
    lexicographically smallest id sequence."""
    adj = graph.adjacency() if isinstance(graph, TopoGraph) else graph
    if src not in adj or dst not in adj:
        raise NoTopoPath(f"no topo path: unknown waypoint {src if src not in adj else dst}")
    heap: list[tuple[float, tuple[int, ...]]] = [(0, (src,))]
    done: set[int] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return list(path)
        for nbr, length in adj[node].items():
            if nbr not in done:
                heapq.heappush(heap, (cost + length, path + (nbr,)))
    raise NoTopoPath(f"no topo path from {src} to {dst}")


def path_cost(graph: TopoGraph | dict[int, dict[int, int]], path: list[int]) -> int:
    adj = graph.adjacency() if isinstance(graph, TopoGraph) else graph
    return sum(adj[a][b] for a, b in zip(path, path[1:]))


def select_entry_waypoint(
    graph: TopoGraph, room_mask: Iterable[Cell], pose_cell: Cell, space=None, field: DistanceField | None = None
) -> int:
    """In-room waypoint with the smallest travel time from ``pose_cell``."""
    inside = graph.in_cells(room_mask)
    if not inside:
        raise LookupError("no waypoint inside the target room")
    if field is None:
        if space is None:
            raise ValueError("need either a travel-time field or the map to compute one")
        field = fmm(space, [pose_cell])
    return min(inside, key=lambda i: (field.at(graph.cell(i)), i))


def turn_towards(heading: int, desired: int) -> Action:
    if heading == desired:
        return FORWARD
    delta = (desired - heading) % HEADINGS
    return TURN_RIGHT if delta <= HEADINGS // 2 else TURN_LEFT


def next_action(cell: Cell, heading: int, field: DistanceField) -> Action:
    here = field.at(cell)
    if not math.isfinite(here):
        raise Trapped(f"pose {cell} is unreachable in the current field")
    if here == 0.0:
        return NO_OP
    h, w = field.values.shape
    best, best_val = None, INF
    for head, (dx, dy) in _STEPS:
        nx, ny = cell[0] + dx, cell[1] + dy
        if 0 <= nx < w and 0 <= ny < h and field.values[ny, nx] < best_val:
            best, best_val = head, float(field.values[ny, nx])
    if best is None:
        raise Trapped(f"trapped at {cell}: every neighbour is unreachable")
    return turn_towards(heading, best)


def plan_route(
    graph: TopoGraph, space, pose_cell: Cell, room_id: str, room_mask: Iterable[Cell], graph_version: int = 0
) -> PlanState:
    """Entry waypoint, Dijkstra path from the nearest waypoint, and the field
    toward the first mid-term goal."""
    from_pose = fmm(space, [pose_cell])
    entry = select_entry_waypoint(graph, room_mask, pose_cell, field=from_pose)
    reachable = [wp.id for wp in graph.waypoints if math.isfinite(from_pose.at(wp.cell))]
    src = min(reachable, key=lambda i: (from_pose.at(graph.cell(i)), i))
    path = dijkstra(graph, src, entry)
    state = PlanState(room_id, entry, path, path[0], graph_version=graph_version)
    advance(state, graph, space, pose_cell)
    return state


def advance(state: PlanState, graph: TopoGraph, space, pose_cell: Cell) -> bool:
    """Move the mid-term goal forward once the agent stands on it.  Returns
    True when the entry waypoint has been reached."""
    idx = state.topo_path.index(state.mid_term_goal)
    while graph.cell(state.mid_term_goal) == tuple(pose_cell) and idx < len(state.topo_path) - 1:
        idx += 1
        state.mid_term_goal = state.topo_path[idx]
        state.field = None
    if state.field is None:
        state.field = fmm(space, [graph.cell(state.mid_term_goal)])
    return graph.cell(state.entry_waypoint) == tuple(pose_cell)


# ---------------------------------------------------------------- panorama


@dataclass
class Panorama:
    """Twelve right turns at a waypoint, one heading-indexed frame per turn."""

    agent_id: int
    waypoint_cell: Cell
    camera_fov: float = DEFAULT_CAMERA_FOV
    frames: list[FrameRecord] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return len(self.frames) >= PANORAMA_FRAMES

    def next_action(self) -> Action:
        return NO_OP if self.finished else TURN_RIGHT

    def record(self, world: World) -> tuple[FrameRecord, Observation]:
        obs = sense(world, self.agent_id, fov_deg=self.camera_fov)
        frame = FrameRecord(
            self.agent_id,
            self.waypoint_cell,
            obs.pose.heading,
            frozenset(c for c, _ in obs.visible_cells),
            obs.visible_objects,
            obs.tick,
        )
        self.frames.append(frame)
        return frame, obs


class PanoramaLog:
    """Per-agent panorama cooldown bookkeeping, keyed by waypoint cell."""

    def __init__(self, cooldown: int = PANORAMA_COOLDOWN):
        self.cooldown = cooldown
        self.last: dict[Cell, int] = {}

    def due(self, cell: Cell, tick: int) -> bool:
        last = self.last.get(tuple(cell))
        return last is None or tick - last >= self.cooldown

    def mark(self, cell: Cell, tick: int) -> None:
        self.last[tuple(cell)] = tick


def on_waypoint_arrival(
    world: World, agent_id: int, graph: TopoGraph, camera_fov: float = DEFAULT_CAMERA_FOV
) -> tuple[World, list[FrameRecord]]:
    """Rotate in place through all 12 headings when standing on a waypoint.

    Other agents idle during the 12 ticks.  Returns the advanced world and
    the frames; a cell that is not a waypoint yields no frames.
    """
    cell = world.agents[agent_id].cell
    if graph.at(cell) is None:
        return world, []
    pano = Panorama(agent_id, cell, camera_fov)
    while not pano.finished:
        world, _ = step(world, {agent_id: pano.next_action()})
        pano.record(world)
    return world, pano.frames


def descend(world: World, agent_id: int, field: DistanceField, limit: int = 10_000) -> tuple[World, int, int]:
    """Follow ``next_action`` until arrival; returns (world, forward moves, turns)."""
    moves = turns = 0
    for _ in range(limit):
        pose = world.agents[agent_id]
        action = next_action(pose.cell, pose.heading, field)
        if action == NO_OP:
            return world, moves, turns
        if action == FORWARD:
            moves += 1
        else:
            turns += 1
        world, _ = step(world, {agent_id: action})
    raise Trapped("descent did not converge")


def axis_heading(vec: Cell) -> int:
    for head, v in AXIS_VECTORS.items():
        if v == vec:
            return head
    raise ValueError(vec)
