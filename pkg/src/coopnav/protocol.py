"""Comm-triggered dynamic leadership over a simulated reliable FIFO network.

The leadership token travels with the team-wide state: every answered help
request hands the token, plus a full snapshot, to the requester.  A member
whose request goes unanswered searches for the leader through the lineage of
past leaders and, if the token died with a crashed agent, the most recent
live leader in the lineage takes over.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import heapq
import json
import logging
from random import Random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .oracle import (
    AgentDirective,
    AgentView,
    CoordinationResult,
    MemberContext,
    Oracle,
    Proposal,
    RoomOption,
    RuleOracle,
    coordinate,
)
from .oracle.rules import check_proposal, ensure_valid
from .rooms import CooccurrenceTable, load_cooccurrence
from .state import (
    LOCKED,
    UNCLAIMED,
    AgentEntry,
    GlobalProgress,
    GlobalState,
    RoomInfo,
    TargetStatus,
    is_frontier,
    room_sort_key,
)
from .world import Cell

log = logging.getLogger(__name__)

HELP_REQUEST = "HelpRequest"
LEADER_RESPONSE = "LeaderResponse"
INTERRUPT = "Interrupt"
WHO_IS_LEADER = "WhoIsLeader"
LEADER_IS = "LeaderIs"
HEARTBEAT = "Heartbeat"
KINDS = (HELP_REQUEST, LEADER_RESPONSE, INTERRUPT, WHO_IS_LEADER, LEADER_IS, HEARTBEAT)
HISTORY_LIMIT = 10


class ProtocolError(RuntimeError):
    pass


def timeout_ticks(team_size: int, max_latency: int) -> int:
    """Upper bound on a request round trip: up to N forwarding hops plus the
    answer, each taking at most ``max_latency`` ticks."""
    return (team_size + 2) * (max_latency + 1)


def probe_ticks(max_latency: int) -> int:
    return 2 * (max_latency + 1) + 1


# ---------------------------------------------------------------- messages


def _plain(obj):
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(o) for o in obj]
    if isinstance(obj, (frozenset, set)):
        items = [_plain(o) for o in obj]
        try:
            return sorted(items)
        except TypeError:
            return sorted(items, key=repr)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass(frozen=True)
class Message:
    kind: str
    sender: int
    receiver: int
    sent_tick: int
    payload: Mapping = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if self.kind == LEADER_RESPONSE and not self.payload.get("grant"):
            raise ValueError("a LeaderResponse always carries the leadership grant")

    @functools.cached_property
    def digest_value(self) -> str:
        body = json.dumps(
            [self.kind, self.sender, self.receiver, self.sent_tick, _plain(self.payload)],
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(body.encode()).hexdigest()[:12]

    def digest(self) -> str:
        return self.digest_value


@dataclass(frozen=True)
class LogRecord:
    tick: int
    event: str  # send | recv | drop
    kind: str
    sender: int
    receiver: int
    digest: str

    def line(self) -> str:
        return f"{self.tick}\t{self.event}\t{self.kind}\t{self.sender}\t{self.receiver}\t{self.digest}"

    @classmethod
    def parse(cls, line: str) -> "LogRecord":
        tick, event, kind, sender, receiver, digest = line.rstrip("\n").split("\t")
        return cls(int(tick), event, kind, int(sender), int(receiver), digest)


LOG_HEADER = "tick\tevent\tkind\tsender\treceiver\tdigest"


class Network:
    """Reliable per-pair FIFO links with integer latency in ticks.

    Delivery order is (deliver_tick, sender, sequence number).  Messages to
    crashed agents are dropped at delivery time."""

    def __init__(self, latency: int | Callable[[Message], int] = 0, max_latency: int | None = None):
        if callable(latency):
            self._latency = latency
            self.max_latency = max_latency if max_latency is not None else 0
        else:
            self._latency = lambda _m, _l=int(latency): _l
            self.max_latency = int(latency) if max_latency is None else max_latency
        self._queue: list[tuple[int, int, int, Message]] = []
        self._last: dict[tuple[int, int], int] = {}
        self._seq = 0
        self.crashed: set[int] = set()
        self.log: list[LogRecord] = []
        self.sent: dict[str, int] = {k: 0 for k in KINDS}
        self.on_drop: Callable[[Message], None] | None = None

    @classmethod
    def random(cls, rng: Random, max_latency: int) -> "Network":
        return cls(lambda _m: rng.randint(0, max_latency), max_latency=max_latency)

    def send(self, msg: Message) -> None:
        lat = self._latency(msg)
        if lat < 0:
            raise ProtocolError(f"negative latency {lat}")
        pair = (msg.sender, msg.receiver)
        due = max(msg.sent_tick + lat, self._last.get(pair, 0))
        self._last[pair] = due
        self._seq += 1
        heapq.heappush(self._queue, (due, msg.sender, self._seq, msg))
        self.sent[msg.kind] += 1
        self.log.append(LogRecord(msg.sent_tick, "send", msg.kind, msg.sender, msg.receiver, msg.digest()))

    def pop_due(self, tick: int) -> Message | None:
        while self._queue and self._queue[0][0] <= tick:
            _, _, _, msg = heapq.heappop(self._queue)
            if msg.receiver in self.crashed:
                self.log.append(LogRecord(tick, "drop", msg.kind, msg.sender, msg.receiver, msg.digest()))
                if self.on_drop:
                    self.on_drop(msg)
                continue
            self.log.append(LogRecord(tick, "recv", msg.kind, msg.sender, msg.receiver, msg.digest()))
            return msg
        return None

    def grants_to(self, receivers: set[int]) -> int:
        return sum(1 for *_, m in self._queue if m.kind == LEADER_RESPONSE and m.receiver in receivers)

    def in_flight(self) -> list[Message]:
        return [m for *_, m in sorted(self._queue)]

    def idle(self) -> bool:
        return not self._queue

    def total_sent(self) -> int:
        return sum(self.sent.values())

    def log_text(self) -> str:
        return "\n".join([LOG_HEADER] + [r.line() for r in self.log]) + "\n"


# ---------------------------------------------------------------- state


@dataclass(frozen=True)
class AgentReport:
    """What a requester contributes to the team state with its request."""

    agent_id: int
    pose: tuple[int, int, int] | None
    rooms: tuple[RoomInfo, ...] = ()
    found: tuple[str, ...] = ()
    sightings: tuple[tuple[str, Cell], ...] = ()


@dataclass(frozen=True)
class LeadershipState:
    current_leader: int
    lineage: tuple[int, ...]
    state: GlobalState
    progress: GlobalProgress

    def __post_init__(self):
        if not self.lineage or self.lineage[-1] != self.current_leader:
            raise ValueError("the current leader must close the lineage")
        if any(a == b for a, b in zip(self.lineage, self.lineage[1:])):
            raise ValueError("lineage has consecutive duplicates")


def merge_rooms(
    state: GlobalState, reports: Iterable[RoomInfo], unknown_label: str = "unknown room"
) -> tuple[GlobalState, dict[str, str]]:
    """Fold reported rooms into the registry by cell overlap.

    A report overlapping nothing gets a fresh ``room-N`` id; overlapping
    several registry rooms merges them into the lowest id.  Returns the new
    state and the reported-id to registry-id mapping."""
    mapping: dict[str, str] = {}
    for rep in sorted(reports, key=lambda r: room_sort_key(r.room_id)):
        hits = sorted((r for r in state.rooms if r.cells & rep.cells), key=lambda r: room_sort_key(r.room_id))
        if not hits:
            gid = f"room-{state.next_room}"
            state = replace(state, next_room=state.next_room + 1)
            info = replace(rep, room_id=gid)
        else:
            keep = hits[0]
            gid = keep.room_id
            cells = frozenset().union(rep.cells, *(h.cells for h in hits))
            objects = tuple(sorted(set(rep.objects).union(*(h.objects for h in hits))))
            labels = [rep.label] + [h.label for h in hits]
            label = next((lb for lb in labels if lb != unknown_label), unknown_label)
            likely = rep.likely_targets if rep.label != unknown_label else keep.likely_targets
            explored = rep.explored or any(h.explored for h in hits)
            info = RoomInfo(gid, label, objects, cells, explored, likely)
            gone = {h.room_id for h in hits[1:]}
            if gone:
                state = state.without_rooms(gone)
                state = _remap_assignments(state, gone, gid)
        state = state.with_room(info)
        mapping[rep.room_id] = gid
    return state, mapping


def _remap_assignments(state: GlobalState, gone: set[str], gid: str) -> GlobalState:
    holders = [e.agent_id for e in state.agents if e.assigned_room == gid and e.alive]
    for e in sorted(state.agents, key=lambda e: e.agent_id):
        if e.assigned_room in gone:
            if holders:
                # Two agents now share one room; the later one waits for a new directive.
                state = state.with_agent(replace(e, assigned_room=None))
            else:
                state = state.with_agent(replace(e, assigned_room=gid))
                holders.append(e.agent_id)
    return state


def absorb_report(
    state: GlobalState, progress: GlobalProgress, report: AgentReport, unknown_label: str = "unknown room"
) -> tuple[GlobalState, GlobalProgress, dict[str, str]]:
    state, mapping = merge_rooms(state, report.rooms, unknown_label)
    progress = progress.mark_found(report.found)
    remaining = set(progress.remaining())
    entry = state.agent(report.agent_id)
    contributed = tuple(sorted(set(entry.rooms_contributed) | set(mapping.values()), key=room_sort_key))
    sightings = tuple(s for s in report.sightings if s[0] in remaining)
    state = state.with_agent(
        replace(
            entry,
            pose=report.pose if report.pose is not None else entry.pose,
            rooms_contributed=contributed,
            sightings=sightings,
            alive=True,
        )
    )
    return _sync_locks(state, progress), progress, mapping


def _sync_locks(state: GlobalState, progress: GlobalProgress) -> GlobalState:
    for e in state.agents:
        locks = progress.locks_of(e.agent_id)
        if locks != e.locks:
            state = state.with_agent(replace(e, locks=locks))
    return state


def apply_coordination(
    state: GlobalState, progress: GlobalProgress, result: CoordinationResult
) -> tuple[GlobalState, GlobalProgress]:
    for d in result.directives:
        entry = state.agent(d.agent_id)
        sighted = {cls for cls, _ in entry.sightings}
        for t in progress.locks_of(d.agent_id):
            if t not in d.locks:
                progress = progress.set(t, TargetStatus(UNCLAIMED))
        for t in d.locks:
            progress = progress.set(t, TargetStatus(LOCKED, d.agent_id, t in sighted))
        state = state.with_agent(replace(entry, assigned_room=d.action))
    return _sync_locks(state, progress).bump(), progress


def mark_dead(state: GlobalState, progress: GlobalProgress, dead: Iterable[int]) -> tuple[GlobalState, GlobalProgress]:
    for i in sorted(set(dead)):
        try:
            entry = state.agent(i)
        except KeyError:
            continue
        progress = progress.release(i)
        state = state.with_agent(replace(entry, alive=False, assigned_room=None, locks=()))
    return _sync_locks(state, progress), progress


def bootstrap(
    agent_ids: Sequence[int],
    descriptions: Mapping[int, Sequence[RoomInfo]] | None = None,
    goals: Sequence[str] = (),
    poses: Mapping[int, tuple[int, int, int]] | None = None,
    unknown_label: str = "unknown room",
) -> LeadershipState:
    """Lowest id becomes the temporary leader holding everyone's preliminary
    room descriptions.  Runs out of band, before the first tick."""
    ids = sorted(set(agent_ids))
    if not ids:
        raise ProtocolError("cannot bootstrap an empty team")
    poses = poses or {}
    state = GlobalState(tuple(AgentEntry(i, poses.get(i)) for i in ids))
    progress = GlobalProgress(tuple(goals))
    for i in ids:
        rooms = tuple((descriptions or {}).get(i, ()))
        state, progress, _ = absorb_report(state, progress, AgentReport(i, poses.get(i), rooms), unknown_label)
    return LeadershipState(ids[0], (ids[0],), replace(state, version=1), progress)


# ---------------------------------------------------------------- nodes


@dataclass
class Pending:
    request_id: str
    proposal: Proposal
    report: AgentReport
    sent_tick: int
    phase: str = "request"  # request | probe | takeover
    deadline: int = 0
    candidates: list[int] = field(default_factory=list)
    probe: int | None = None
    probe_id: str = ""
    lineage: tuple[int, ...] = ()
    contacted: list[int] = field(default_factory=list)


@dataclass
class Directive:
    directive: AgentDirective
    version: int
    tick: int
    via: str  # response | interrupt | local | takeover


class ProtocolNode:
    def __init__(
        self,
        agent_id: int,
        team: Sequence[int],
        goals: Sequence[str],
        oracle: Oracle | None = None,
        table: CooccurrenceTable | None = None,
        max_latency: int = 0,
    ):
        self.agent_id = agent_id
        self.team = tuple(sorted(team))
        self.goals = tuple(goals)
        self.oracle = oracle or RuleOracle()
        self.table = table or getattr(self.oracle, "table", None) or load_cooccurrence()
        self.timeout = timeout_ticks(len(self.team), max_latency)
        self.probe_timeout = probe_ticks(max_latency)
        self.alive = True
        self.leader = self.team[0]
        self.is_leader = False
        self.lineage: tuple[int, ...] = (self.team[0],)
        self.state: GlobalState | None = None
        self.progress: GlobalProgress | None = None
        self.local = GlobalProgress(self.goals)
        self.history: list[str] = []
        self.pending: Pending | None = None
        self.applied: set[str] = set()
        self.known_dead: set[int] = set()
        self.assignment: str | None = None
        self.locks: tuple[str, ...] = ()
        self.directive_version = -1
        self.directives: list[Directive] = []
        self.pose: tuple[int, int, int] | None = None
        self.recoveries: list[dict] = []
        self.takeovers = 0
        self._requests = 0
        self._probes = 0

    # ----------------------------------------------------------- helpers

    def install(self, ls: LeadershipState) -> None:
        """Out-of-band bootstrap: every member starts with the seed snapshot."""
        self.state, self.progress = ls.state, ls.progress
        self.leader, self.lineage = ls.current_leader, ls.lineage
        self.is_leader = ls.current_leader == self.agent_id
        self.local = ls.progress

    def _msg(self, kind: str, to: int, tick: int, **payload) -> Message:
        return Message(kind, self.agent_id, to, tick, payload)

    def _note(self, text: str) -> None:
        self.history.append(text)
        del self.history[:-HISTORY_LIMIT]

    def _snapshot(self) -> dict:
        return {"state": self.state, "progress": self.progress, "lineage": list(self.lineage)}

    def _emit(self, directive: AgentDirective, version: int, tick: int, via: str) -> None:
        self.assignment = directive.action
        self.locks = directive.locks
        self.directive_version = version
        local = self.local
        for t in local.locks_of(self.agent_id):
            if t not in directive.locks:
                local = local.set(t, TargetStatus(UNCLAIMED))
        for t in directive.locks:
            local = local.set(t, TargetStatus(LOCKED, self.agent_id))
        self.local = local
        self.directives.append(Directive(directive, version, tick, via))

    def take_directives(self) -> list[Directive]:
        out, self.directives = self.directives, []
        return out

    def note_found(self, cls: str) -> None:
        self.local = self.local.mark_found([cls])

    def make_proposal(self, view: AgentView, options: Sequence[RoomOption]) -> Proposal:
        ctx = MemberContext(self.agent_id, self.local, view, self.goals, tuple(self.history), tuple(options))
        prop = self.oracle.propose(ctx)
        ensure_valid(check_proposal(prop, ctx))
        return prop

    # ----------------------------------------------------------- requests

    def request_help(self, proposal: Proposal, report: AgentReport, tick: int) -> list[Message]:
        if not self.alive:
            raise ProtocolError("agent crashed")
        self._requests += 1
        rid = f"{self.agent_id}:{self._requests}"
        self.pending = Pending(rid, proposal, report, tick)
        self._note(f"t={tick} proposed {proposal.action} locks={list(proposal.locks)}")
        if self.is_leader:
            return self._serve_local(tick)
        return [self._send_request(tick)]

    def _send_request(self, tick: int) -> Message:
        p = self.pending
        p.phase, p.deadline, p.sent_tick = "request", tick + self.timeout, tick
        return self._msg(
            HELP_REQUEST,
            self.leader,
            tick,
            request_id=p.request_id,
            origin=self.agent_id,
            proposal=p.proposal,
            report=p.report,
            hops=0,
        )

    def _coordinate(self, proposal: Proposal, report: AgentReport) -> CoordinationResult:
        self.state, self.progress, mapping = absorb_report(
            self.state, self.progress, report, self.table.unknown_label
        )
        action = mapping.get(proposal.action, proposal.action)
        proposal = replace(proposal, action=action)
        result = coordinate(proposal, self.progress, self.state, self.goals, impl=self.oracle)
        self.state, self.progress = apply_coordination(self.state, self.progress, result)
        return result

    def _interrupts(self, result: CoordinationResult, tick: int) -> list[Message]:
        out = []
        for d in result.interrupts:
            if d.agent_id in self.known_dead:
                continue
            out.append(self._msg(INTERRUPT, d.agent_id, tick, directive=d, version=self.state.version))
        return out

    def _serve_local(self, tick: int) -> list[Message]:
        p, self.pending = self.pending, None
        result = self._coordinate(p.proposal, p.report)
        self.applied.add(p.request_id)
        self._emit(result.requester, self.state.version, tick, "local")
        self.local = self._merge_local(self.progress)
        self._note(f"t={tick} self-served: {result.requester.decision} {result.requester.action}")
        return self._interrupts(result, tick)

    def _merge_local(self, progress: GlobalProgress) -> GlobalProgress:
        return progress.mark_found(self.local.found())

    # ----------------------------------------------------------- handlers

    def handle(self, msg: Message, tick: int) -> list[Message]:
        if not self.alive:
            return []
        handler = {
            HELP_REQUEST: self._on_request,
            LEADER_RESPONSE: self._on_response,
            INTERRUPT: self._on_interrupt,
            WHO_IS_LEADER: self._on_who,
            LEADER_IS: self._on_leader_is,
            HEARTBEAT: lambda m, t: [],
        }[msg.kind]
        return handler(msg, tick)

    def _on_request(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        origin = pl["origin"]
        if pl["request_id"] in self.applied:
            return []
        if origin == self.agent_id:
            # Our own request came back; serve it if we hold the token by now.
            if self.is_leader and self.pending and self.pending.request_id == pl["request_id"]:
                return self._serve_local(tick)
            return []
        if not self.is_leader:
            if pl["hops"] >= 2 * len(self.team):
                log.info("dropping request %s after %d hops", pl["request_id"], pl["hops"])
                return []
            out = [Message(HELP_REQUEST, self.agent_id, self.leader, tick, {**pl, "hops": pl["hops"] + 1})]
            if self.leader != origin:
                out.append(self._msg(LEADER_IS, origin, tick, leader=self.leader, lineage=list(self.lineage),
                                     is_leader=False, version=self._version(), reply_to=None))
            return out
        return self.handle_help_request(msg, tick)

    def handle_help_request(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        origin = pl["origin"]
        result = self._coordinate(pl["proposal"], pl["report"])
        self.applied.add(pl["request_id"])
        self.is_leader = False
        self.leader = origin
        self.lineage = self.lineage + (origin,)
        response = self._msg(
            LEADER_RESPONSE,
            origin,
            tick,
            request_id=pl["request_id"],
            grant=True,
            directive=result.requester,
            snapshot=self._snapshot(),
        )
        return [response] + self._interrupts(result, tick)

    def _version(self) -> int:
        return self.state.version if self.state is not None else -1

    def _on_response(self, msg: Message, tick: int) -> list[Message]:
        return self.apply_response(msg, tick)

    def apply_response(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        if pl["request_id"] in self.applied:
            return []
        self.applied.add(pl["request_id"])
        snap = pl["snapshot"]
        self.is_leader = True
        self.leader = self.agent_id
        self.lineage = tuple(snap["lineage"])
        stale = self.state is not None and snap["state"].version < self.state.version
        if stale:
            # Keep the newer copy we hold and answer our own request with it.
            self._note(f"t={tick} stale snapshot v{snap['state'].version} from {msg.sender}")
            self.state = self.state.bump()
            if self.pending and self.pending.request_id == pl["request_id"]:
                return self._serve_local(tick)
            return []
        self.state, self.progress = snap["state"], snap["progress"]
        entry = self.state.agent(self.agent_id)
        self.state = self.state.with_agent(replace(entry, pose=self.pose or entry.pose)).bump()
        self.local = self._merge_local(self.progress)
        d = pl["directive"]
        self._emit(d, self.state.version, tick, "response")
        self._note(f"t={tick} leader {msg.sender}: {d.decision} -> {d.action}")
        if self.pending and self.pending.request_id == pl["request_id"]:
            self.pending = None
        return []

    def _on_interrupt(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        if pl["version"] <= self.directive_version:
            return []
        d = pl["directive"]
        self._emit(d, pl["version"], tick, "interrupt")
        self._note(f"t={tick} interrupted by {msg.sender}: go to {d.action}")
        return []

    def _adopt(self, leader: int, lineage: Sequence[int]) -> bool:
        lineage = tuple(lineage)
        if len(lineage) < len(self.lineage):
            return False
        if self.is_leader and leader != self.agent_id:
            if len(lineage) == len(self.lineage):
                return False
            # Someone holds a later grant; step down.
            log.warning("agent %d defers leadership to %d", self.agent_id, leader)
            self.is_leader = False
        self.leader, self.lineage = leader, lineage
        return True

    def _on_leader_is(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        p = self.pending
        if p and p.phase in ("probe", "takeover") and pl.get("reply_to") == p.probe_id:
            return self._census_reply(msg, tick)
        adopted = self._adopt(pl["leader"], pl["lineage"])
        if adopted and p and p.phase != "request" and pl["is_leader"] and pl["leader"] not in self.known_dead:
            # A takeover announcement ends our own search.
            return [self._send_request(tick)]
        return []

    # ----------------------------------------------------------- recovery

    def on_tick(self, tick: int) -> list[Message]:
        p = self.pending
        if not self.alive or p is None or tick < p.deadline:
            return []
        if p.phase == "request":
            return self.recover(tick)
        if p.phase == "probe":
            self.known_dead.add(p.probe)
            return self._next_probe(tick)
        self.known_dead.add(p.probe)
        return self._start_takeover(tick)

    def recover(self, tick: int) -> list[Message]:
        """Ask past leaders, most recent first, then the rest of the team."""
        p = self.pending
        order: list[int] = []
        for a in reversed(self.lineage):
            if a not in order:
                order.append(a)
        order += [a for a in self.team if a not in order]
        p.candidates = [a for a in order if a != self.agent_id and a not in self.known_dead]
        p.lineage = self.lineage
        self.recoveries.append(
            {
                "agent": self.agent_id,
                "tick": tick,
                "suspect": self.leader,
                "lineage": list(self.lineage),
                "order": list(p.candidates),
                "contacted": p.contacted,
            }
        )
        self._note(f"t={tick} leader {self.leader} silent; asking lineage {list(p.candidates)}")
        return self._next_probe(tick)

    def _next_probe(self, tick: int) -> list[Message]:
        p = self.pending
        while p.candidates and p.candidates[0] in self.known_dead:
            p.candidates.pop(0)
        if not p.candidates:
            return self._start_takeover(tick)
        c = p.candidates.pop(0)
        self._probes += 1
        p.phase, p.probe, p.probe_id = "probe", c, f"{self.agent_id}:p{self._probes}"
        p.deadline = tick + self.probe_timeout
        p.contacted.append(c)
        return [self._msg(WHO_IS_LEADER, c, tick, probe_id=p.probe_id, lineage=list(p.lineage),
                          version=self._version(), takeover=False, dead=[])]

    def _start_takeover(self, tick: int) -> list[Message]:
        p = self.pending
        alive_lineage = [a for a in reversed(p.lineage) if a not in self.known_dead]
        taker = alive_lineage[0] if alive_lineage else min(
            a for a in self.team if a not in self.known_dead
        )
        if taker == self.agent_id:
            out = self.take_over(tick, sorted(self.known_dead), p.lineage)
            return out + self._serve_local(tick)
        self._probes += 1
        p.phase, p.probe, p.probe_id = "takeover", taker, f"{self.agent_id}:p{self._probes}"
        p.deadline = tick + self.probe_timeout
        p.contacted.append(taker)
        return [self._msg(WHO_IS_LEADER, taker, tick, probe_id=p.probe_id, lineage=list(p.lineage),
                          version=self._version(), takeover=True, dead=sorted(self.known_dead))]

    def _census_reply(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        p = self.pending
        leader, lineage = pl["leader"], tuple(pl["lineage"])
        if pl["is_leader"] or (len(lineage) > len(p.lineage) and leader not in self.known_dead):
            self.leader = leader
            if len(lineage) >= len(self.lineage):
                self.lineage = lineage
            return [self._send_request(tick)]
        if len(lineage) > len(p.lineage):
            p.lineage = lineage
        if p.phase == "takeover":
            # The chosen taker points elsewhere; look again with what it told us.
            return self._next_probe(tick) if p.candidates else self._start_takeover(tick)
        return self._next_probe(tick)

    def _on_who(self, msg: Message, tick: int) -> list[Message]:
        pl = msg.payload
        if len(pl["lineage"]) > len(self.lineage) and not self.is_leader:
            self.lineage = tuple(pl["lineage"])
            self.leader = self.lineage[-1]
        dead = set(pl["dead"]) | self.known_dead
        if pl["takeover"] and not self.is_leader and self.leader in dead:
            out = self.take_over(tick, sorted(dead), self.lineage)
            reply = self._msg(LEADER_IS, msg.sender, tick, leader=self.agent_id, lineage=list(self.lineage),
                              is_leader=True, version=self._version(), reply_to=pl["probe_id"])
            out = [m for m in out if m.receiver != msg.sender] + [reply]
            if self.pending:
                out += self._serve_local(tick)
            return out
        return [self._msg(LEADER_IS, msg.sender, tick, leader=self.leader, lineage=list(self.lineage),
                          is_leader=self.is_leader, version=self._version(), reply_to=pl["probe_id"])]

    def take_over(self, tick: int, dead: Sequence[int], lineage: Sequence[int]) -> list[Message]:
        """Regenerate the token from our retained snapshot after the last
        holder was confirmed dead, and announce it to every live teammate."""
        self.known_dead |= set(dead)
        self.state, self.progress = mark_dead(self.state, self.progress, dead)
        self.state = self.state.bump()
        lineage = tuple(lineage) if len(lineage) > len(self.lineage) else self.lineage
        if lineage[-1] != self.agent_id:
            lineage = lineage + (self.agent_id,)
        self.lineage = lineage
        self.leader, self.is_leader = self.agent_id, True
        self.takeovers += 1
        self.local = self._merge_local(self.progress)
        self._note(f"t={tick} took over leadership; dead={list(dead)}")
        return [
            self._msg(LEADER_IS, a, tick, leader=self.agent_id, lineage=list(self.lineage), is_leader=True,
                      version=self._version(), reply_to=None)
            for a in self.team
            if a != self.agent_id and a not in self.known_dead
        ]

    def crash(self) -> None:
        self.alive = False


# ---------------------------------------------------------------- team harness


class Team:
    """Nodes plus network, with invariant checks after every delivery."""

    def __init__(self, nodes: Mapping[int, ProtocolNode], network: Network, check: bool = True):
        self.nodes = dict(sorted(nodes.items()))
        self.network = network
        self.check = check
        self.violations: list[str] = []
        self.token_lost = False
        self.leader_log: list[int] = [self.leader()] if self.leader() is not None else []
        self.processed = 0
        # (token count, token known lost) after every processing step; replay rechecks these
        self.token_samples: list[tuple[int, bool]] = []
        network.on_drop = self._dropped

    @classmethod
    def create(
        cls,
        agent_ids: Sequence[int],
        goals: Sequence[str],
        network: Network,
        oracle: Oracle | None = None,
        descriptions: Mapping[int, Sequence[RoomInfo]] | None = None,
        poses: Mapping[int, tuple[int, int, int]] | None = None,
        check: bool = True,
    ) -> "Team":
        oracle = oracle or RuleOracle()
        table = getattr(oracle, "table", None) or load_cooccurrence()
        ls = bootstrap(agent_ids, descriptions, goals, poses, table.unknown_label)
        nodes = {}
        for i in sorted(agent_ids):
            node = ProtocolNode(i, agent_ids, goals, oracle, table, network.max_latency)
            node.install(ls)
            node.pose = (poses or {}).get(i)
            nodes[i] = node
        return cls(nodes, network, check)

    def _dropped(self, msg: Message) -> None:
        if msg.kind == LEADER_RESPONSE:
            self.token_lost = True

    def leader(self) -> int | None:
        leaders = [i for i, n in self.nodes.items() if n.alive and n.is_leader]
        return leaders[0] if len(leaders) == 1 else None

    def alive(self) -> list[int]:
        return [i for i, n in self.nodes.items() if n.alive]

    def send(self, msgs: Iterable[Message]) -> None:
        for m in msgs:
            self.network.send(m)

    def crash(self, agent_id: int) -> None:
        node = self.nodes[agent_id]
        if node.is_leader or self.network.grants_to({agent_id}):
            self.token_lost = True
        node.crash()
        self.network.crashed.add(agent_id)

    def request(self, agent_id: int, proposal: Proposal, report: AgentReport, tick: int) -> None:
        self.send(self.nodes[agent_id].request_help(proposal, report, tick))
        self._after(f"local request by {agent_id} at {tick}")

    def pump(self, tick: int) -> int:
        """Deliver everything due by ``tick`` and fire timeouts.  Returns the
        number of messages processed."""
        count = 0
        while True:
            msg = self.network.pop_due(tick)
            if msg is None:
                fired = False
                for i in self.alive():
                    out = self.nodes[i].on_tick(tick)
                    if out:
                        fired = True
                        self.send(out)
                    self._after(f"timeout at {i} tick {tick}")
                if not fired:
                    return count
                continue
            count += 1
            self.processed += 1
            self.send(self.nodes[msg.receiver].handle(msg, tick))
            self._after(f"{msg.kind} {msg.sender}->{msg.receiver} at {tick}")

    def token_count(self) -> int:
        alive = set(self.alive())
        leaders = sum(1 for i in alive if self.nodes[i].is_leader)
        grants = self.network.grants_to(alive)
        return leaders + grants

    def _after(self, where: str) -> None:
        count = self.token_count()
        if count == 1:
            self.token_lost = False
        self.token_samples.append((count, self.token_lost))
        current = self.leader()
        if current is None and count == 1:
            # Token in flight; the lineage already names its addressee.
            alive = set(self.alive())
            current = next(m.receiver for m in self.network.in_flight()
                           if m.kind == LEADER_RESPONSE and m.receiver in alive)
        if current is not None and (not self.leader_log or self.leader_log[-1] != current):
            self.leader_log.append(current)
        if not self.check:
            return
        if count > 1:
            self.violations.append(f"single-leader: {count} tokens after {where}")
        elif count == 0 and not self.token_lost:
            self.violations.append(f"single-leader: token vanished after {where}")

    def conflicts(self) -> list[str]:
        """Assignment and lock conflicts in the token-carried state."""
        lead = self.leader()
        if lead is None:
            return []
        node = self.nodes[lead]
        problems = []
        rooms: dict[str, int] = {}
        for e in node.state.agents:
            if not e.alive or e.assigned_room is None or is_frontier(e.assigned_room):
                continue
            if e.assigned_room in rooms:
                problems.append(f"room {e.assigned_room} assigned to {rooms[e.assigned_room]} and {e.agent_id}")
            rooms[e.assigned_room] = e.agent_id
        owner: dict[str, int] = {}
        for e in node.state.agents:
            for t in e.locks:
                if t in owner:
                    problems.append(f"target {t} locked by {owner[t]} and {e.agent_id}")
                owner[t] = e.agent_id
        for t, h in node.progress.locks().items():
            if owner.get(t) != h:
                problems.append(f"lock on {t} disagrees between progress and agent entries")
        return problems

    def lineage_matches_log(self) -> bool:
        lead = self.leader()
        if lead is None:
            return True
        return list(self.nodes[lead].lineage) == self.leader_log
