"""Voronoi-style skeleton waypoints and the topological graph over known free space.

The skeleton is produced by distance-ordered homotopic thinning: free cells
(4-connected foreground, 8-connected background) are peeled in increasing
clearance order, never deleting a cell whose removal would change the
topology, and never deleting ridge cells of the clearance field in the
first pass.  The survivors are then thinned to one cell width.  Unknown
cells count as obstacles.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from .mapping import SemanticMap
from .world import Cell

DEFAULT_SAMPLE_INTERVAL = 5

_N4 = ((0, -1), (1, 0), (0, 1), (-1, 0))
# Ring order around the centre cell, clockwise from north-west.
_RING = ((-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0))


def _components(cells: list[int], adjacent) -> list[set[int]]:
    comps: list[set[int]] = []
    for c in cells:
        merged = [comp for comp in comps if any(adjacent(c, o) for o in comp)]
        new = {c}
        for comp in merged:
            new |= comp
            comps.remove(comp)
        comps.append(new)
    return comps


def _simple_table() -> np.ndarray:
    """Lookup of 4-simplicity for each of the 256 ring configurations."""

    def adj4(i, j):
        (ax, ay), (bx, by) = _RING[i], _RING[j]
        return abs(ax - bx) + abs(ay - by) == 1

    def adj8(i, j):
        (ax, ay), (bx, by) = _RING[i], _RING[j]
        return max(abs(ax - bx), abs(ay - by)) == 1

    orth = {i for i, (dx, dy) in enumerate(_RING) if abs(dx) + abs(dy) == 1}
    table = np.zeros(256, dtype=bool)
    for code in range(256):
        fg = [i for i in range(8) if code >> i & 1]
        bg = [i for i in range(8) if not code >> i & 1]
        t4 = sum(1 for comp in _components(fg, adj4) if comp & orth)
        t8bar = len(_components(bg, adj8))
        table[code] = t4 == 1 and t8bar == 1
    return table


_SIMPLE = _simple_table()


def _ring_code(mask: np.ndarray, x: int, y: int) -> int:
    h, w = mask.shape
    code = 0
    for i, (dx, dy) in enumerate(_RING):
        nx, ny = x + dx, y + dy
        if 0 <= nx < w and 0 <= ny < h and mask[ny, nx]:
            code |= 1 << i
    return code


def is_simple(mask: np.ndarray, cell: Cell) -> bool:
    return bool(_SIMPLE[_ring_code(mask, *cell)])


def clearance(free: np.ndarray) -> np.ndarray:
    """Euclidean distance (cells) from each free cell to the nearest non-free
    cell, with everything outside the grid counted as obstacle."""
    padded = np.pad(free, 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def _n4_degree(mask: np.ndarray, x: int, y: int) -> int:
    h, w = mask.shape
    return sum(1 for dx, dy in _N4 if 0 <= x + dx < w and 0 <= y + dy < h and mask[y + dy, x + dx])


def skeletonize(smap: SemanticMap) -> set[Cell]:
    free = smap.free_mask()
    if not free.any():
        raise ValueError("no known free space to skeletonize")
    dist = clearance(free)
    h, w = free.shape
    padded = np.pad(dist, 1, constant_values=0.0)
    neighbour_max = np.maximum.reduce(
        [padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
    )
    ridge = free & (dist >= neighbour_max)

    skel = free.copy()
    ys, xs = np.nonzero(free & ~ridge)
    order = sorted(zip(xs.tolist(), ys.tolist()), key=lambda c: (dist[c[1], c[0]], c[1], c[0]))
    _peel(skel, order, keep_ends=False)

    ys, xs = np.nonzero(skel)
    order = sorted(zip(xs.tolist(), ys.tolist()), key=lambda c: (dist[c[1], c[0]], c[1], c[0]))
    _peel(skel, order, keep_ends=True)
    ys, xs = np.nonzero(skel)
    return set(zip(xs.tolist(), ys.tolist()))


def _peel(skel: np.ndarray, order: list[Cell], keep_ends: bool) -> None:
    changed = True
    while changed:
        changed = False
        for x, y in order:
            if not skel[y, x]:
                continue
            if keep_ends and _n4_degree(skel, x, y) <= 1:
                continue
            if _SIMPLE[_ring_code(skel, x, y)]:
                skel[y, x] = False
                changed = True


@dataclass(frozen=True)
class Waypoint:
    id: int
    cell: Cell
    clearance: float


@dataclass
class TopoGraph:
    waypoints: list[Waypoint]
    edges: list[tuple[int, int, int]]

    def __post_init__(self):
        self._by_cell = {wp.cell: wp.id for wp in self.waypoints}

    def adjacency(self) -> dict[int, dict[int, int]]:
        adj: dict[int, dict[int, int]] = {wp.id: {} for wp in self.waypoints}
        for a, b, length in self.edges:
            for u, v in ((a, b), (b, a)):
                if v not in adj[u] or length < adj[u][v]:
                    adj[u][v] = length
        return adj

    def cell(self, waypoint_id: int) -> Cell:
        return self.waypoints[waypoint_id].cell

    def at(self, cell: Cell) -> int | None:
        return self._by_cell.get(tuple(cell))

    def in_cells(self, cells: Iterable[Cell]) -> list[int]:
        cells = set(cells)
        return [wp.id for wp in self.waypoints if wp.cell in cells]

    def components(self) -> list[set[int]]:
        adj = self.adjacency()
        seen: set[int] = set()
        comps = []
        for wp in self.waypoints:
            if wp.id in seen:
                continue
            comp = {wp.id}
            queue = deque([wp.id])
            while queue:
                u = queue.popleft()
                for v in adj[u]:
                    if v not in comp:
                        comp.add(v)
                        queue.append(v)
            seen |= comp
            comps.append(comp)
        return comps

    def to_text(self) -> str:
        """Adjacency-list export: ``wp`` lines then one ``adj`` line per waypoint."""
        lines = [f"# topograph waypoints={len(self.waypoints)} edges={len(self.edges)}"]
        for wp in self.waypoints:
            lines.append(f"wp {wp.id} {wp.cell[0]} {wp.cell[1]} {wp.clearance:.6f}")
        for u, nbrs in sorted(self.adjacency().items()):
            body = " ".join(f"{v}:{length}" for v, length in sorted(nbrs.items()))
            lines.append(f"adj {u}: {body}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TopoGraph":
        waypoints, edges = [], set()
        for line in text.splitlines():
            if line.startswith("wp "):
                _, i, x, y, c = line.split()
                waypoints.append(Waypoint(int(i), (int(x), int(y)), float(c)))
            elif line.startswith("adj "):
                head, _, body = line.partition(":")
                u = int(head.split()[1])
                for item in body.split():
                    v, length = item.split(":")
                    edges.add((min(u, int(v)), max(u, int(v)), int(length)))
        return cls(waypoints, sorted(edges))


def _walk_chains(skel: set[Cell], nodes: set[Cell]) -> list[list[Cell]]:
    def nbrs(c):
        return [(c[0] + dx, c[1] + dy) for dx, dy in _N4 if (c[0] + dx, c[1] + dy) in skel]

    chains: dict[tuple, list[Cell]] = {}
    for start in sorted(nodes, key=lambda c: (c[1], c[0])):
        for first in nbrs(start):
            path = [start, first]
            prev, cur = start, first
            while cur not in nodes:
                nxt = [n for n in nbrs(cur) if n != prev]
                if not nxt:
                    break
                prev, cur = cur, nxt[0]
                path.append(cur)
            key_fwd = tuple((c[1], c[0]) for c in path)
            key_rev = key_fwd[::-1]
            canon = path if key_fwd <= key_rev else path[::-1]
            chains[min(key_fwd, key_rev)] = canon
    return [chains[k] for k in sorted(chains)]


def build_graph(
    skeleton: Iterable[Cell], smap: SemanticMap, sample_interval: int = DEFAULT_SAMPLE_INTERVAL
) -> TopoGraph:
    skel = set(map(tuple, skeleton))
    if not skel:
        return TopoGraph([], [])

    def degree(c):
        return sum(1 for dx, dy in _N4 if (c[0] + dx, c[1] + dy) in skel)

    nodes = {c for c in skel if degree(c) != 2}
    # Pure cycles have no junctions or ends; anchor each at its first cell.
    unvisited = set(skel)
    while unvisited:
        seed = min(unvisited, key=lambda c: (c[1], c[0]))
        comp = {seed}
        queue = deque([seed])
        while queue:
            c = queue.popleft()
            for dx, dy in _N4:
                n = (c[0] + dx, c[1] + dy)
                if n in skel and n not in comp:
                    comp.add(n)
                    queue.append(n)
        unvisited -= comp
        if not comp & nodes:
            nodes.add(seed)

    chains = _walk_chains(skel, nodes)
    points = set(nodes)
    segments: list[tuple[Cell, Cell, int]] = []
    for path in chains:
        steps = len(path) - 1
        marks = [0] + [i for i in range(sample_interval, steps, sample_interval)] + [steps]
        points.update(path[i] for i in marks)
        for a, b in zip(marks, marks[1:]):
            segments.append((path[a], path[b], b - a))

    dist = clearance(smap.free_mask())
    cells = sorted(points, key=lambda c: (c[1], c[0]))
    ids = {c: i for i, c in enumerate(cells)}
    waypoints = [Waypoint(i, c, float(dist[c[1], c[0]])) for i, c in enumerate(cells)]
    best: dict[tuple[int, int], int] = {}
    for a, b, length in segments:
        u, v = sorted((ids[a], ids[b]))
        if u == v:
            continue
        if (u, v) not in best or length < best[(u, v)]:
            best[(u, v)] = length
    edges = [(u, v, length) for (u, v), length in sorted(best.items())]
    return TopoGraph(waypoints, edges)


def extract(smap: SemanticMap, sample_interval: int = DEFAULT_SAMPLE_INTERVAL) -> TopoGraph:
    return build_graph(skeletonize(smap), smap, sample_interval)


def nearest_waypoint(graph: TopoGraph, smap: SemanticMap, cell: Cell) -> int | None:
    """Waypoint reached first by a 4-connected search through known-free cells."""
    if not graph.waypoints:
        return None
    free = smap.free_mask()
    h, w = free.shape
    start = tuple(cell)
    seen = {start}
    frontier = [start]
    while frontier:
        hits = [graph.at(c) for c in frontier if graph.at(c) is not None]
        if hits:
            return min(hits)
        nxt = []
        for x, y in frontier:
            for dx, dy in _N4:
                n = (x + dx, y + dy)
                if 0 <= n[0] < w and 0 <= n[1] < h and free[n[1], n[0]] and n not in seen:
                    seen.add(n)
                    nxt.append(n)
        frontier = nxt
    return None
