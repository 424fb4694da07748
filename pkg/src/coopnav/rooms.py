"""Room segmentation of the known map, best-view frame selection and room
descriptions.

Doors are free cells whose free run along one axis is at most
``door_width`` cells and whose removal splits the free cells of their 3x3
neighbourhood.  Rooms are the 4-connected components left after doors are
removed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np
from scipy import ndimage

from .mapping import SemanticMap
from .world import Cell

log = logging.getLogger(__name__)

DEFAULT_DOOR_WIDTH = 2
DEFAULT_MIN_ROOM_CELLS = 1
PANORAMA_FRAMES = 12
COOCCURRENCE_PATH = Path(__file__).parent / "data" / "cooccurrence.json"


@dataclass(frozen=True)
class RoomDescription:
    room_id: str
    label: str
    object_list: tuple[str, ...]
    text: str
    likely_targets: tuple[str, ...]
    degraded: bool = False


@dataclass
class RoomSegment:
    room_id: str
    mask: frozenset[Cell]
    door_cells: frozenset[Cell] = frozenset()
    explored: float = 0.0
    description: RoomDescription | None = None


@dataclass(frozen=True)
class FrameRecord:
    agent_id: int
    waypoint_cell: Cell
    heading: int
    visible_cells: frozenset[Cell]
    visible_objects: tuple[tuple[str, Cell], ...]
    tick: int


class RoomUnseen(LookupError):
    pass


# ---------------------------------------------------------------- co-occurrence


@dataclass(frozen=True)
class CooccurrenceTable:
    version: str
    unknown_label: str
    classes: tuple[str, ...]
    rooms: dict[str, dict[str, float]] = field(hash=False)

    def value(self, label: str, cls: str) -> float:
        return self.rooms.get(label, {}).get(cls, 0.0)

    def kinds(self) -> list[str]:
        return [k for k in self.rooms if k != self.unknown_label]

    def infer_label(self, objects: Iterable[str]) -> str:
        objects = [o for o in objects if o in self.classes]
        best, best_score = self.unknown_label, 0.0
        for kind in self.kinds():
            score = sum(self.rooms[kind].get(o, 0.0) for o in objects)
            if score > best_score:
                best, best_score = kind, score
        return best

    def likely(self, label: str, targets: Iterable[str], threshold: float = 0.0) -> tuple[str, ...]:
        return tuple(t for t in targets if self.value(label, t) > threshold)


@lru_cache(maxsize=None)
def _load_table(path: str) -> CooccurrenceTable:
    raw = json.loads(Path(path).read_text())
    return CooccurrenceTable(raw["version"], raw["unknown_label"], tuple(raw["classes"]), raw["rooms"])


def load_cooccurrence(path: str | Path | None = None) -> CooccurrenceTable:
    return _load_table(str(path or COOCCURRENCE_PATH))


# ---------------------------------------------------------------- segmentation

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _runs(free: np.ndarray, axis: int) -> np.ndarray:
    """Length of the contiguous free run through every cell along ``axis``."""
    out = np.zeros(free.shape, dtype=np.int32)
    arr = free if axis == 1 else free.T
    res = out if axis == 1 else out.T
    for i, line in enumerate(arr):
        j = 0
        n = len(line)
        while j < n:
            if not line[j]:
                j += 1
                continue
            k = j
            while k < n and line[k]:
                k += 1
            res[i, j:k] = k - j
            j = k
    return out


def _splits_neighbourhood(free: np.ndarray, x: int, y: int) -> bool:
    h, w = free.shape
    ring = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if (dx or dy) and 0 <= x + dx < w and 0 <= y + dy < h and free[y + dy, x + dx]:
                ring.append((dx, dy))
    if len(ring) < 2:
        return False
    ring_set = set(ring)
    seen = {ring[0]}
    stack = [ring[0]]
    while stack:
        cx, cy = stack.pop()
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            n = (cx + dx, cy + dy)
            if n in ring_set and n not in seen:
                seen.add(n)
                stack.append(n)
    return len(seen) < len(ring)


def door_cells(smap: SemanticMap, door_width: int = DEFAULT_DOOR_WIDTH) -> set[Cell]:
    free = smap.free_mask()
    horiz, vert = _runs(free, 1), _runs(free, 0)
    narrow = free & ((horiz <= door_width) | (vert <= door_width))
    ys, xs = np.nonzero(narrow)
    return {(x, y) for x, y in zip(xs.tolist(), ys.tolist()) if _splits_neighbourhood(free, x, y)}


def segment(
    smap: SemanticMap,
    previous: Sequence[RoomSegment] = (),
    *,
    door_width: int = DEFAULT_DOOR_WIDTH,
    min_room_cells: int = DEFAULT_MIN_ROOM_CELLS,
    id_prefix: str = "room-",
) -> list[RoomSegment]:
    """Split known free space into rooms.

    ``previous`` carries the last segmentation so a growing room keeps its
    id: new components are matched to old rooms by largest overlap.
    """
    free = smap.free_mask()
    doors = door_cells(smap, door_width)
    body = free.copy()
    for x, y in doors:
        body[y, x] = False
    labels, n = ndimage.label(body, structure=_FOUR)
    comps: list[set[Cell]] = [set() for _ in range(n)]
    ys, xs = np.nonzero(labels)
    for x, y, lab in zip(xs.tolist(), ys.tolist(), labels[ys, xs].tolist()):
        comps[lab - 1].add((x, y))

    comps = _merge_small(comps, doors, min_room_cells)
    comps.sort(key=lambda c: min((y, x) for x, y in c))

    # stable ids: greedy matching by overlap size
    pairs = []
    for i, comp in enumerate(comps):
        for old in previous:
            ov = len(comp & old.mask)
            if ov:
                pairs.append((-ov, old.room_id, i))
    pairs.sort()
    assigned: dict[int, str] = {}
    used: set[str] = set()
    for _, rid, i in pairs:
        if i not in assigned and rid not in used:
            assigned[i] = rid
            used.add(rid)
    counter = _next_index(previous, id_prefix)
    segments = []
    for i, comp in enumerate(comps):
        rid = assigned.get(i)
        if rid is None:
            rid = f"{id_prefix}{counter}"
            counter += 1
        touching = {d for d in doors if any((d[0] + dx, d[1] + dy) in comp for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)))}
        segments.append(RoomSegment(rid, frozenset(comp), frozenset(touching), _closed_fraction(smap, comp)))
    return segments


def _next_index(previous: Sequence[RoomSegment], prefix: str) -> int:
    idx = [int(r.room_id[len(prefix):]) for r in previous if r.room_id.startswith(prefix) and r.room_id[len(prefix):].isdigit()]
    return max(idx, default=-1) + 1


def _merge_small(comps: list[set[Cell]], doors: set[Cell], min_cells: int) -> list[set[Cell]]:
    if min_cells <= 1:
        return comps

    def door_neighbours(comp):
        near = set()
        for d in doors:
            if any((d[0] + dx, d[1] + dy) in comp for dx in (-1, 0, 1) for dy in (-1, 0, 1)):
                near.add(d)
        return near

    changed = True
    while changed:
        changed = False
        for comp in sorted(comps, key=len):
            if len(comp) >= min_cells:
                continue
            links = door_neighbours(comp)
            others = [o for o in comps if o is not comp and door_neighbours(o) & links]
            if not others:
                continue
            target = max(others, key=lambda o: (len(o), -min((y, x) for x, y in o)[0]))
            target |= comp
            comps = [c for c in comps if c is not comp]
            changed = True
            break
    return comps


def _closed_fraction(smap: SemanticMap, comp: set[Cell]) -> float:
    """Share of room cells with no unknown 4-neighbour (1.0 = fully explored)."""
    occ = smap.occupancy
    h, w = occ.shape
    open_cells = 0
    for x, y in comp:
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and occ[ny, nx] == 0:
                open_cells += 1
                break
    return 1.0 - open_cells / len(comp)


def is_explored(room: RoomSegment) -> bool:
    return room.explored >= 1.0


# ---------------------------------------------------------------- frames


def best_frame(room: RoomSegment, frames: Iterable[FrameRecord]) -> FrameRecord:
    best, key = None, None
    for f in frames:
        seen = len(f.visible_cells & room.mask)
        if not seen:
            continue
        k = (-seen, f.tick, f.heading)
        if key is None or k < key:
            best, key = f, k
    if best is None:
        raise RoomUnseen(f"room unseen: {room.room_id}")
    return best


# ---------------------------------------------------------------- describers


@dataclass(frozen=True)
class RoomStats:
    room_id: str
    cell_count: int
    door_count: int
    explored: float


class RoomDescriber(Protocol):
    def __call__(self, stats: RoomStats, objects: Sequence[str], targets: Sequence[str]) -> RoomDescription: ...


class RuleDescriber:
    """Label by the room kind with the highest summed co-occurrence."""

    def __init__(self, table: CooccurrenceTable | None = None):
        self.table = table or load_cooccurrence()

    def __call__(self, stats, objects, targets):
        objs = tuple(sorted(set(objects)))
        label = self.table.infer_label(objs)
        likely = self.table.likely(label, targets)
        listing = ", ".join(objs) if objs else "no recognisable objects"
        text = f"A {label} of {stats.cell_count} cells containing {listing}."
        return RoomDescription(stats.room_id, label, objs, text, likely)


class DescriberError(RuntimeError):
    pass


class RemoteDescriber:
    """POSTs room stats and objects to an HTTP endpoint.

    Request body: ``{"room_id", "cell_count", "door_count", "explored",
    "objects": [...], "targets": [...]}``.  Response body: ``{"label",
    "text", "likely_targets": [...]}``.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.client = client or httpx.Client(timeout=timeout)

    def __call__(self, stats, objects, targets):
        body = {
            "room_id": stats.room_id,
            "cell_count": stats.cell_count,
            "door_count": stats.door_count,
            "explored": stats.explored,
            "objects": sorted(set(objects)),
            "targets": list(targets),
        }
        try:
            resp = self.client.post(self.endpoint, json=body, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            likely = tuple(t for t in data.get("likely_targets", []) if t in targets)
            return RoomDescription(stats.room_id, str(data["label"]), tuple(sorted(set(objects))), str(data.get("text", "")), likely)
        except (httpx.HTTPError, KeyError, ValueError, TypeError) as exc:
            raise DescriberError(str(exc)) from exc


def describe(
    room: RoomSegment,
    frame: FrameRecord,
    describer: RoomDescriber | None = None,
    targets: Sequence[str] = (),
) -> RoomDescription:
    """Describe ``room`` from the objects its best frame shows inside the mask."""
    objects = [cls for cls, cell in frame.visible_objects if cell in room.mask]
    stats = RoomStats(room.room_id, len(room.mask), len(room.door_cells), room.explored)
    rule = RuleDescriber()
    if describer is None:
        return rule(stats, objects, targets)
    try:
        return describer(stats, objects, targets)
    except DescriberError as exc:
        log.warning("describer failed for %s, using rule-based fallback: %s", room.room_id, exc)
        return replace(rule(stats, objects, targets), degraded=True)


def map_frame(agent_id: int, room: RoomSegment, smap: SemanticMap, tick: int) -> FrameRecord:
    """Synthetic frame covering everything the map knows about ``room``; used
    when no panorama frame has seen the room yet."""
    objects = tuple(
        (cls, cell) for cls, cells in smap.objects_in(room.mask).items() for cell in cells
    )
    anchor = min(room.mask, key=lambda c: (c[1], c[0]))
    return FrameRecord(agent_id, anchor, 0, room.mask, objects, tick)
