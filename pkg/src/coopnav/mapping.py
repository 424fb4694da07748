"""Per-agent semantic map: occupancy, per-class semantics and last-seen ticks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .world import Cell, Observation, Occupancy


class MapBoundsError(ValueError):
    pass


@dataclass(eq=False)
class SemanticMap:
    occupancy: np.ndarray  # int8, Occupancy values, indexed [y, x]
    semantics: dict[str, set[Cell]] = field(default_factory=dict)
    observed_ticks: np.ndarray | None = None

    def __post_init__(self):
        if self.observed_ticks is None:
            self.observed_ticks = np.full(self.occupancy.shape, -1, dtype=np.int64)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "SemanticMap":
        return cls(np.zeros(shape, dtype=np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def copy(self) -> "SemanticMap":
        return SemanticMap(
            self.occupancy.copy(), {k: set(v) for k, v in self.semantics.items()}, self.observed_ticks.copy()
        )

    def state(self, cell: Cell) -> Occupancy:
        return Occupancy(int(self.occupancy[cell[1], cell[0]]))

    def free_mask(self) -> np.ndarray:
        return self.occupancy == Occupancy.FREE

    def known_mask(self) -> np.ndarray:
        return self.occupancy != Occupancy.UNKNOWN

    def known_count(self) -> int:
        return int(self.known_mask().sum())

    def objects_in(self, cells: Iterable[Cell]) -> dict[str, list[Cell]]:
        cells = set(cells)
        out: dict[str, list[Cell]] = {}
        for cls in sorted(self.semantics):
            hits = sorted(c for c in self.semantics[cls] if c in cells)
            if hits:
                out[cls] = hits
        return out

    def frontier_cells(self, within: Iterable[Cell] | None = None) -> list[Cell]:
        """Known-free cells 4-adjacent to an unknown cell."""
        free = self.free_mask()
        unknown = self.occupancy == Occupancy.UNKNOWN
        pad = np.pad(unknown, 1, constant_values=False)
        near = pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2] | pad[1:-1, 2:]
        ys, xs = np.nonzero(free & near)
        cells = list(zip(xs.tolist(), ys.tolist()))
        if within is not None:
            within = set(within)
            cells = [c for c in cells if c in within]
        return sorted(cells, key=lambda c: (c[1], c[0]))

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256(self.occupancy.tobytes())
        for cls in sorted(self.semantics):
            h.update(cls.encode())
            h.update(repr(sorted(self.semantics[cls])).encode())
        return h.hexdigest()[:16]


def integrate(smap: SemanticMap, obs: Observation) -> SemanticMap:
    """Return a new map with ``obs`` folded in; cells not observed are untouched."""
    h, w = smap.shape
    for (x, y), _ in obs.visible_cells:
        if not (0 <= x < w and 0 <= y < h):
            raise MapBoundsError(f"observed cell {(x, y)} outside map bounds {w}x{h}")
    out = smap.copy()
    for (x, y), occ in obs.visible_cells:
        out.occupancy[y, x] = int(occ)
        out.observed_ticks[y, x] = obs.tick
    for cls, cell in obs.visible_objects:
        out.semantics.setdefault(cls, set()).add(tuple(cell))
    return out


def integrate_inplace(smap: SemanticMap, obs: Observation) -> bool:
    """Fold ``obs`` into ``smap`` without copying; returns True when occupancy changed."""
    if not obs.visible_cells:
        return False
    xs = np.fromiter((c[0][0] for c in obs.visible_cells), dtype=np.int64)
    ys = np.fromiter((c[0][1] for c in obs.visible_cells), dtype=np.int64)
    occ = np.fromiter((int(c[1]) for c in obs.visible_cells), dtype=np.int8)
    h, w = smap.shape
    if xs.min() < 0 or ys.min() < 0 or xs.max() >= w or ys.max() >= h:
        raise MapBoundsError("observation extends outside map bounds")
    changed = bool((smap.occupancy[ys, xs] != occ).any())
    smap.occupancy[ys, xs] = occ
    smap.observed_ticks[ys, xs] = obs.tick
    for cls, cell in obs.visible_objects:
        smap.semantics.setdefault(cls, set()).add(tuple(cell))
    return changed


def coverage_fraction(smap: SemanticMap, mask: Iterable[Cell]) -> float:
    cells = list(set(mask))
    if not cells:
        raise ValueError("coverage of an empty mask is undefined")
    known = sum(1 for x, y in cells if smap.occupancy[y, x] != Occupancy.UNKNOWN)
    return known / len(cells)


# ---------------------------------------------------------------- dump format
#
# <stem>.occupancy.pgm      binary P5, 0 = unknown, 128 = free, 255 = obstacle
# <stem>.<class>.pgm        binary P5, 255 where the class was observed
# <stem>.json               {"width", "height", "channels": {name: file}, "ticks": [[...]]}

_OCC_GRAY = {Occupancy.UNKNOWN: 0, Occupancy.FREE: 128, Occupancy.OBSTACLE: 255}


def write_pgm(path: Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    raw = data[pos + 1 : pos + 1 + w * h]
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


def dump_map(smap: SemanticMap, directory: str | Path, stem: str = "map") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gray = np.zeros(smap.shape, dtype=np.uint8)
    for occ, value in _OCC_GRAY.items():
        gray[smap.occupancy == occ] = value
    channels = {"occupancy": f"{stem}.occupancy.pgm"}
    write_pgm(directory / channels["occupancy"], gray)
    for cls in sorted(smap.semantics):
        layer = np.zeros(smap.shape, dtype=np.uint8)
        for x, y in smap.semantics[cls]:
            layer[y, x] = 255
        name = f"{stem}.{cls.replace(' ', '_')}.pgm"
        channels[cls] = name
        write_pgm(directory / name, layer)
    index = {
        "width": smap.shape[1],
        "height": smap.shape[0],
        "channels": channels,
        "occupancy_levels": {"unknown": 0, "free": 128, "obstacle": 255},
        "ticks": smap.observed_ticks.tolist(),
    }
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(index, indent=1))
    return path


def load_map(index_path: str | Path) -> SemanticMap:
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    gray = read_pgm(index_path.parent / index["channels"]["occupancy"])
    occ = np.zeros(gray.shape, dtype=np.int8)
    for level, value in _OCC_GRAY.items():
        occ[gray == value] = int(level)
    semantics = {}
    for cls, name in index["channels"].items():
        if cls == "occupancy":
            continue
        ys, xs = np.nonzero(read_pgm(index_path.parent / name))
        semantics[cls] = set(zip(xs.tolist(), ys.tolist()))
    return SemanticMap(occ, semantics, np.asarray(index["ticks"], dtype=np.int64))
