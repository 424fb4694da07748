"""Checksummed replay traces and the offline replayer.

A trace is JSON lines.  Line ``k`` is ``{"i": k, "prev": <sum of line k-1>,
"record": {...}, "sum": sha256(k | prev | canonical record)}``; the first
record is the header, the last the summary.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..mapping import SemanticMap, integrate_inplace
from ..protocol import LogRecord
from ..world import AgentPose, parse_scenario, sense

GENESIS = "0" * 16
FORMAT = "coopnav-trace/1"


class TraceError(ValueError):
    def __init__(self, message: str, index: int):
        super().__init__(f"record {index}: {message}")
        self.index = index


def canonical(record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def record_sum(index: int, prev: str, record) -> str:
    return hashlib.sha256(f"{index}|{prev}|{canonical(record)}".encode()).hexdigest()[:16]


class TraceWriter:
    def __init__(self):
        self.lines: list[str] = []
        self.prev = GENESIS

    def write(self, record: dict) -> None:
        # Round-trip through JSON first so tuples and lists hash the same on replay.
        record = json.loads(canonical(record))
        i = len(self.lines)
        s = record_sum(i, self.prev, record)
        self.lines.append(canonical({"i": i, "prev": self.prev, "record": record, "sum": s}))
        self.prev = s

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def header(config: dict, scenario_doc, seed: int, team_size: int, max_steps: int) -> dict:
    return {
        "type": "header",
        "format": FORMAT,
        "config": config,
        "scenario": scenario_doc,
        "seed": seed,
        "team_size": team_size,
        "max_steps": max_steps,
    }


def read_trace(path: str | Path) -> list[dict]:
    """Load and verify the checksum chain; returns the records."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    records = []
    prev = GENESIS
    for k, line in enumerate(lines):
        try:
            entry = json.loads(line)
        except json.JSONDecodeError:
            raise TraceError("unreadable (truncated or corrupted) line", k) from None
        if not isinstance(entry, dict) or set(entry) != {"i", "prev", "record", "sum"}:
            raise TraceError("malformed entry", k)
        if entry["i"] != k:
            raise TraceError(f"index {entry['i']} out of sequence", k)
        if entry["prev"] != prev:
            raise TraceError("chain broken: previous checksum does not match", k)
        if record_sum(k, prev, entry["record"]) != entry["sum"]:
            raise TraceError("checksum mismatch", k)
        records.append(entry["record"])
        prev = entry["sum"]
    if not records or records[0].get("type") != "header":
        raise TraceError("missing header", 0)
    if records[-1].get("type") != "summary":
        raise TraceError("truncated trace: summary missing", len(records))
    for k, rec in enumerate(records[1:-1], start=1):
        if rec.get("type") != "tick" or rec.get("tick") != k - 1:
            raise TraceError(f"expected tick {k - 1}", k)
    return records


# ---------------------------------------------------------------- replay


@dataclass
class ReplayResult:
    ticks: int
    records: int
    map_mismatches: list[tuple[int, int]] = field(default_factory=list)
    leader_violations: int = 0
    conflict_violations: int = 0
    live_leader_violations: int = 0
    live_conflict_violations: int = 0
    messages: int = 0
    leaders: list[int | None] = field(default_factory=list)
    poses: list[list] = field(default_factory=list)
    timeline: list[str] = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @property
    def verdicts_match(self) -> bool:
        return (
            self.leader_violations == self.live_leader_violations
            and self.conflict_violations == self.live_conflict_violations
        )

    def text(self) -> str:
        head = [
            f"records: {self.records}  ticks: {self.ticks}  checksum failures: 0",
            f"map reconstruction mismatches: {len(self.map_mismatches)}",
            f"single-leader violations: replay {self.leader_violations}, live {self.live_leader_violations}",
            f"conflict violations: replay {self.conflict_violations}, live {self.live_conflict_violations}",
            f"messages on the wire: {self.messages}",
        ]
        return "\n".join(head + self.timeline) + "\n"


def _token_violation(count: int, lost: bool) -> bool:
    return count > 1 or (count == 0 and not lost)


def _registry_conflicts(reg: dict) -> int:
    found = 0
    rooms = [r for r in reg["assigned"].values() if r and not r.startswith("frontier-")]
    found += len(rooms) - len(set(rooms))
    owner: dict[str, str] = {}
    for agent, locks in reg["locks"].items():
        for t in locks:
            if t in owner:
                found += 1
            owner[t] = agent
    for t, h in reg["progress_locks"].items():
        if owner.get(t) != str(h):
            found += 1
    return found


def replay(path: str | Path, plot: str | Path | None = None) -> ReplayResult:
    """Verify a trace, rebuild every agent's map from the recorded poses and
    recheck the protocol invariants offline."""
    records = read_trace(path)
    head, ticks, summary = records[0], records[1:-1], records[-1]
    world, _ = parse_scenario(head["scenario"])
    n = head["team_size"]
    world = world.with_agents(world.agents[:n])
    maps = [SemanticMap.empty(world.shape) for _ in range(n)]
    for i in range(n):
        integrate_inplace(maps[i], sense(world, i))
    result = ReplayResult(len(ticks), len(records), report=summary["report"])
    result.live_leader_violations = len(summary["report"]["leader_violations"])
    for rec in ticks:
        t = rec["tick"]
        agents = tuple(AgentPose((p[0], p[1]), p[2], bool(p[3])) for p in rec["poses"])
        world = dataclasses.replace(world.with_agents(agents), tick=t)
        for i, pose in enumerate(agents):
            if pose.alive:
                integrate_inplace(maps[i], sense(world, i))
            if maps[i].digest() != rec["maps"][i]:
                result.map_mismatches.append((t, i))
        for line in rec["messages"]:
            r = LogRecord.parse(line)
            if r.event == "send":
                result.messages += 1
        result.leader_violations += sum(1 for c, lost in rec["tokens"] if _token_violation(c, lost))
        if rec["quiescent"] and rec["registry"] is not None:
            result.conflict_violations += _registry_conflicts(rec["registry"])
        result.leaders.append(rec["leader"])
        result.poses.append(rec["poses"])
        acts = " ".join(f"{k}:{v}" for k, v in rec["actions"].items())
        result.timeline.append(f"t={t} leader={rec['leader']} msgs={len(rec['messages'])} {acts}")
    result.live_conflict_violations = sum(
        1 for c in summary["report"]["conflict_violations"]
    )
    if plot is not None:
        from . import plots

        trails = {i: [(p[i][0], p[i][1]) for p in result.poses] for i in range(n)}
        plots.trajectories(world, trails, plot)
    return result
