"""Deterministic rule-based proposal and coordination.

Rooms are scored by summed co-occurrence of the still-claimable targets with
the room label, divided by ``1 + distance``.  Everything here is a pure
function of its inputs so whole episodes can be recorded and replayed.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from ..rooms import CooccurrenceTable, load_cooccurrence
from ..state import (
    GlobalProgress,
    GlobalState,
    RoomInfo,
    frontier_room,
    is_frontier,
    room_sort_key,
)
from ..world import Cell
from .types import (
    OPPOSE,
    SUPPORT,
    AgentDirective,
    CoordinationResult,
    InvalidResult,
    LeaderContext,
    MemberContext,
    NoCandidateRooms,
    Proposal,
    RoomOption,
)

DEFAULT_LOCK_THRESHOLD = 0.5


def target_weight(table: CooccurrenceTable, label: str, target: str, objects: Iterable[str] = ()) -> float:
    """Co-occurrence prior, or certainty when the target was already seen there."""
    return 1.0 if target in objects else table.value(label, target)


def room_score(
    table: CooccurrenceTable, label: str, targets: Iterable[str], distance: float, objects: Iterable[str] = ()
) -> float:
    objects = set(objects)
    return sum(target_weight(table, label, t, objects) for t in targets) / (1.0 + distance)


def manhattan_to_room(pose: tuple[int, ...] | None, cells: Iterable[Cell]) -> float:
    if pose is None:
        return 0.0
    px, py = pose[0], pose[1]
    return float(min((abs(px - x) + abs(py - y) for x, y in cells), default=0))


def claimable(progress: GlobalProgress, agent_id: int) -> list[str]:
    """Remaining targets that are unlocked or already held by ``agent_id``."""
    locks = progress.locks()
    return [t for t in progress.remaining() if locks.get(t, agent_id) == agent_id]


class RuleOracle:
    name = "rule"

    def __init__(self, table: CooccurrenceTable | None = None, lock_threshold: float = DEFAULT_LOCK_THRESHOLD):
        self.table = table or load_cooccurrence()
        self.lock_threshold = lock_threshold

    # -------------------------------------------------------------- members

    def propose(self, ctx: MemberContext) -> Proposal:
        if not ctx.options:
            raise NoCandidateRooms("no candidate rooms")
        free = claimable(ctx.progress, ctx.agent_id)
        best = min(
            ctx.options,
            key=lambda o: (-room_score(self.table, o.label, free, o.distance, o.objects), room_sort_key(o.room_id)),
        )
        sighted = {cls for cls, _ in ctx.view.sightings}
        remaining = set(ctx.progress.remaining())
        locks = tuple(
            t
            for t in ctx.goals
            if t in remaining
            and (
                t in sighted
                or (t in free and target_weight(self.table, best.label, t, best.objects) >= self.lock_threshold)
            )
        )
        score = room_score(self.table, best.label, free, best.distance, best.objects)
        thoughts = f"{best.room_id} ({best.label}) scores {score:.3f} at distance {best.distance:g}"
        return Proposal(ctx.agent_id, locks, best.room_id, thoughts)

    # --------------------------------------------------------------- leader

    def coordinate(self, ctx: LeaderContext) -> CoordinationResult:
        prop, progress, state = ctx.proposal, ctx.progress, ctx.state
        i = prop.agent_id
        alive = {e.agent_id for e in state.agents if e.alive}
        standing = {
            e.agent_id: e.assigned_room
            for e in state.agents
            if e.alive and e.agent_id != i and e.assigned_room and not is_frontier(e.assigned_room)
        }
        blocked = blocked_locks(progress, state, i)
        remaining = progress.remaining()
        taken = set(standing.values())

        allowed = [t for t in remaining if t not in blocked]
        room_conflict = (
            prop.action in taken
            or (not is_frontier(prop.action) and _unusable(state.room(prop.action), allowed))
            or (is_frontier(prop.action) and prop.action != frontier_room(i))
        )
        lock_conflict = bool(set(prop.locks) & blocked)
        sighted_i = {cls for cls, _ in state.agent(i).sightings}

        choice = None
        if room_conflict or lock_conflict:
            choice = self._best_room(state, allowed, state.agent(i).pose, exclude=taken | {prop.action})
        # With only a lock clash and nowhere better to go, keep the room and trim the locks.
        keep_room = not room_conflict and choice is None
        if (room_conflict or lock_conflict) and not keep_room:
            action = choice.room_id if choice else frontier_room(i)
            label = choice.label if choice else self.table.unknown_label
            objects = choice.objects if choice else ()
            locks = tuple(
                t
                for t in ctx.goals
                if t in allowed
                and (t in sighted_i or target_weight(self.table, label, t, objects) >= self.lock_threshold)
            )
            why = "room already assigned" if room_conflict else "locks held by teammates"
            directive = AgentDirective(i, action, decision=OPPOSE, locks=locks, thoughts=f"{why}; go to {action}")
        else:
            locks = tuple(t for t in prop.locks if t in allowed)
            directive = AgentDirective(i, prop.action, decision=SUPPORT, locks=locks, thoughts="no conflict")

        assigned = dict(standing)
        assigned[i] = directive.action
        owner = {t: h for t, h in progress.locks().items() if h in alive and h != i and t in blocked}
        owner.update({t: i for t in directive.locks})
        newly_mine = set(directive.locks) - set(progress.locks_of(i))

        directives = [directive]
        for j in sorted(standing):
            room = state.room(standing[j])
            if room is None:
                continue
            likely = [t for t in remaining if target_weight(self.table, room.label, t, room.objects) > 0.0]
            if not likely or not all(owner.get(t, j) != j for t in likely):
                continue
            if not newly_mine & set(likely):
                continue
            free_j = [t for t in remaining if owner.get(t, j) == j]
            busy = {r for k, r in assigned.items() if k != j}
            choice = self._best_room(state, free_j, state.agent(j).pose, exclude=busy | {room.room_id})
            if choice is None:
                continue
            dist = manhattan_to_room(state.agent(j).pose, choice.cells)
            if room_score(self.table, choice.label, free_j, dist, choice.objects) <= 0.0:
                continue
            keep = [t for t in free_j if owner.get(t) == j]
            extra = [
                t
                for t in free_j
                if t not in owner
                and target_weight(self.table, choice.label, t, choice.objects) >= self.lock_threshold
            ]
            locks_j = tuple(t for t in ctx.goals if t in keep or t in extra)
            assigned[j] = choice.room_id
            owner.update({t: j for t in locks_j})
            directives.append(
                AgentDirective(
                    j,
                    choice.room_id,
                    interrupt=True,
                    locks=locks_j,
                    thoughts=f"{room.room_id} has nothing left to claim; go to {choice.room_id}",
                )
            )
        return CoordinationResult(tuple(directives))

    def _best_room(
        self, state: GlobalState, targets: list[str], pose, exclude: set[str]
    ) -> RoomInfo | None:
        candidates = [r for r in state.rooms if r.room_id not in exclude and not _unusable(r, targets)]
        if not candidates:
            return None

        def key(r: RoomInfo):
            dist = manhattan_to_room(pose, r.cells)
            return (-room_score(self.table, r.label, targets, dist, r.objects), dist, room_sort_key(r.room_id))

        return min(candidates, key=key)


def _unusable(room: RoomInfo | None, targets: Iterable[str]) -> bool:
    """Unknown rooms, and explored rooms holding none of ``targets``."""
    return room is None or (room.explored and not set(targets) & set(room.objects))


def blocked_locks(progress: GlobalProgress, state: GlobalState, agent_id: int) -> set[str]:
    """Targets locked by a live teammate that ``agent_id`` may not take over.

    A lock moves to ``agent_id`` only when it has sighted the target and the
    current holder has not."""
    alive = {e.agent_id for e in state.agents if e.alive}
    sighted = {cls for cls, _ in state.agent(agent_id).sightings}
    out = set()
    for t, holder in progress.locks().items():
        if holder == agent_id or holder not in alive:
            continue
        if t in sighted and not progress.of(t).sighted:
            continue
        out.add(t)
    return out


# ---------------------------------------------------------------- validation


def check_proposal(prop: Proposal, ctx: MemberContext) -> list[str]:
    problems = []
    if prop.agent_id != ctx.agent_id:
        problems.append(f"proposal from agent {prop.agent_id}, expected {ctx.agent_id}")
    if prop.action not in {o.room_id for o in ctx.options}:
        problems.append(f"action {prop.action!r} is not one of the options")
    remaining = set(ctx.progress.remaining())
    bad = [t for t in prop.locks if t not in remaining]
    if bad:
        problems.append(f"locks {bad} are not remaining targets")
    if len(set(prop.locks)) != len(prop.locks):
        problems.append("duplicate locks")
    return problems


def check_coordination(result: CoordinationResult, ctx: LeaderContext) -> list[str]:
    prop, progress, state = ctx.proposal, ctx.progress, ctx.state
    problems: list[str] = []
    if not result.directives:
        return ["no directives"]
    first = result.requester
    i = prop.agent_id
    if first.agent_id != i or first.decision is None:
        problems.append("first directive must answer the requester with a decision")
    ids = [d.agent_id for d in result.directives]
    if len(set(ids)) != len(ids):
        problems.append("more than one directive for an agent")
    alive = {e.agent_id for e in state.agents if e.alive}
    for d in result.interrupts:
        if d.interrupt is not True:
            problems.append(f"directive for {d.agent_id} is neither the answer nor an interrupt")
        if d.agent_id not in alive:
            problems.append(f"interrupt addressed to unknown or dead agent {d.agent_id}")
    for d in result.directives:
        if is_frontier(d.action):
            if d.action != frontier_room(d.agent_id):
                problems.append(f"agent {d.agent_id} sent to another agent's frontier")
        elif state.room(d.action) is None:
            problems.append(f"action {d.action!r} names no known room")

    standing = {
        e.agent_id: e.assigned_room
        for e in state.agents
        if e.alive and e.assigned_room and not is_frontier(e.assigned_room)
    }
    final = dict(standing)
    final.update({d.agent_id: d.action for d in result.directives})
    rooms = [r for r in final.values() if r and not is_frontier(r)]
    if len(rooms) != len(set(rooms)):
        problems.append(f"room assigned twice: {sorted(rooms)}")

    owner: dict[str, int] = {}
    directed = {d.agent_id for d in result.directives}
    for t, h in progress.locks().items():
        if h in alive and h not in directed:
            owner[t] = h
    blocked = blocked_locks(progress, state, i)
    for t in first.locks:
        if t not in blocked:
            owner.pop(t, None)
    for d in result.directives:
        for t in d.locks:
            if t in owner and owner[t] != d.agent_id:
                problems.append(f"target {t!r} locked by both {owner[t]} and {d.agent_id}")
            owner[t] = d.agent_id
    taken_from_others = set(first.locks) & blocked
    if taken_from_others:
        problems.append(f"requester takes locks it may not transfer: {sorted(taken_from_others)}")
    if first.decision == OPPOSE:
        others = {r for k, r in standing.items() if k != i}
        if first.action == prop.action or first.action in others:
            problems.append("oppose must name a different, unassigned room")
    elif first.decision == SUPPORT and first.action != prop.action:
        problems.append("support must keep the proposed room")
    return problems


def ensure_valid(problems: list[str]) -> None:
    if problems:
        raise InvalidResult(problems)


def options_from_rooms(
    rooms: Mapping[str, tuple[str, float, tuple[str, ...]]],
    agent_id: int,
    frontier_distance: float | None = None,
    unknown_label: str = "unknown room",
) -> tuple[RoomOption, ...]:
    """Build an option list from ``{room_id: (label, distance, objects)}`` plus
    the frontier pseudo-room when a frontier distance is given."""
    opts = [RoomOption(rid, label, float(dist), tuple(objs)) for rid, (label, dist, objs) in rooms.items()]
    if frontier_distance is not None:
        opts.append(RoomOption(frontier_room(agent_id), unknown_label, float(frontier_distance)))
    return tuple(sorted(opts, key=lambda o: room_sort_key(o.room_id)))
