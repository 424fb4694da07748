import json

import httpx
import pytest

from coopnav.oracle import (
    OPPOSE,
    SUPPORT,
    AgentDirective,
    AgentView,
    CoordinationResult,
    InvalidResult,
    LeaderContext,
    MemberContext,
    NoCandidateRooms,
    Proposal,
    RemoteOracle,
    ReplyFormatError,
    RoomOption,
    RuleOracle,
    coordinate,
    make_oracle,
    parse_llm_reply,
    propose,
)
from coopnav.oracle.rules import blocked_locks, check_coordination, options_from_rooms, room_score, target_weight
from coopnav.rooms import load_cooccurrence
from coopnav.state import FOUND, LOCKED, AgentEntry, GlobalProgress, GlobalState, RoomInfo, TargetStatus

TABLE = load_cooccurrence()


def box(x0, y0, x1, y1):
    return frozenset((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))


ROOMS = (
    RoomInfo("room-0", "bathroom", ("sink",), box(0, 0, 2, 2)),
    RoomInfo("room-1", "living room", (), box(10, 0, 12, 2)),
    RoomInfo("room-2", "kitchen", (), box(0, 10, 2, 12)),
    RoomInfo("room-3", "bedroom", ("bed",), box(20, 0, 22, 2), explored=True),
)


def world_state(assign=None, locks=None, sightings=None, dead=()):
    assign, locks, sightings = assign or {}, locks or {}, sightings or {}
    agents = tuple(
        AgentEntry(i, (1 + 10 * i, 5, 0), assign.get(i), tuple(t for t, h in locks.items() if h == i), (), i not in dead,
                   tuple(sightings.get(i, ())))
        for i in range(3)
    )
    return GlobalState(agents, ROOMS, 3, 4)


def prog(goals, locks=None, found=(), sighted=()):
    status = []
    for t in goals:
        if t in found:
            s = TargetStatus(FOUND)
        elif locks and t in locks:
            s = TargetStatus(LOCKED, locks[t], t in sighted)
        else:
            s = TargetStatus()
        status.append((t, s))
    return GlobalProgress(tuple(goals), tuple(status))


# ------------------------------------------------------------- scoring


def test_weights_and_scores():
    assert target_weight(TABLE, "kitchen", "microwave") == 0.9
    assert target_weight(TABLE, "kitchen", "toilet", ("toilet",)) == 1.0
    assert room_score(TABLE, "living room", ["tv", "toilet"], 2.0) == pytest.approx(0.9 / 3)


def test_propose_picks_best_scoring_room_and_locks_likely_targets():
    opts = (
        RoomOption("room-1", "bathroom", 4.0),
        RoomOption("room-2", "living room", 2.0),
        RoomOption("frontier-0", "unknown room", 3.0),
    )
    ctx = MemberContext(0, prog(["tv", "toilet"]), AgentView((0, 0, 0)), ("tv", "toilet"), (), opts)
    p = RuleOracle().propose(ctx)
    # living room: 0.9/3 = 0.3 beats bathroom 0.95/5 = 0.19 and frontier 0.6/4 = 0.15
    assert p == Proposal(0, ("tv",), "room-2", p.thoughts)


def test_propose_ties_go_to_lower_room_id():
    opts = (RoomOption("room-7", "kitchen", 1.0), RoomOption("room-3", "kitchen", 1.0))
    ctx = MemberContext(0, prog(["microwave"]), AgentView((0, 0, 0)), ("microwave",), (), opts)
    assert RuleOracle().propose(ctx).action == "room-3"


def test_propose_skips_targets_locked_by_others_but_keeps_sightings():
    opts = (RoomOption("room-2", "living room", 1.0),)
    view = AgentView((0, 0, 0), sightings=(("toilet", (3, 3)),))
    ctx = MemberContext(0, prog(["tv", "toilet"], {"tv": 1, "toilet": 1}), view, ("tv", "toilet"), (), opts)
    assert RuleOracle().propose(ctx).locks == ("toilet",)


def test_propose_without_options():
    ctx = MemberContext(0, prog(["tv"]), AgentView((0, 0, 0)), ("tv",), (), ())
    with pytest.raises(NoCandidateRooms):
        RuleOracle().propose(ctx)


def test_propose_wrapper_validates():
    class Liar(RuleOracle):
        def propose(self, ctx):
            return Proposal(ctx.agent_id, ("nonsense",), "room-99")

    with pytest.raises(InvalidResult) as exc:
        propose(0, prog(["tv"]), AgentView((0, 0, 0)), ["tv"], options=[RoomOption("room-1", "x", 1.0)], impl=Liar())
    assert len(exc.value.problems) == 2


# ------------------------------------------------------------- coordination


def test_support_without_conflict():
    res = coordinate(Proposal(0, ("toilet",), "room-0"), prog(["toilet", "tv"]), world_state(), ["toilet", "tv"])
    assert res.requester.decision == SUPPORT and res.requester.locks == ("toilet",)
    assert res.interrupts == ()


def test_oppose_when_room_taken():
    state = world_state(assign={1: "room-0"})
    res = coordinate(Proposal(0, ("toilet",), "room-0"), prog(["toilet", "microwave"]), state, ["toilet", "microwave"])
    d = res.requester
    assert d.decision == OPPOSE and d.action == "room-2"
    # kitchen: microwave 0.9 >= 0.5 gets locked, toilet does not
    assert d.locks == ("microwave",)


def test_oppose_to_frontier_when_nothing_else_usable():
    state = world_state(assign={1: "room-0", 2: "room-2"})
    goals = ["toilet"]
    res = coordinate(Proposal(0, (), "room-0"), prog(goals), state, goals)
    assert res.requester.decision == OPPOSE
    assert res.requester.action in {"room-1", "frontier-0"}


def test_lock_clash_without_alternative_keeps_room_and_trims_locks():
    state = GlobalState(
        (AgentEntry(0, (0, 0, 0)), AgentEntry(1, (5, 5, 0), None, ("tv",))),
        (RoomInfo("room-0", "living room", (), box(0, 0, 2, 2)),),
    )
    res = coordinate(Proposal(0, ("tv",), "room-0"), prog(["tv"], {"tv": 1}), state, ["tv"])
    assert res.requester.decision == SUPPORT and res.requester.locks == ()


def test_lock_moves_to_the_agent_that_saw_the_target():
    state = world_state(locks={"tv": 1}, sightings={0: [("tv", (11, 1))]})
    progress = prog(["tv"], {"tv": 1})
    assert blocked_locks(progress, state, 0) == set()
    res = coordinate(Proposal(0, ("tv",), "room-1"), progress, state, ["tv"])
    assert res.requester.decision == SUPPORT and res.requester.locks == ("tv",)
    # not when the holder has seen it too
    assert blocked_locks(prog(["tv"], {"tv": 1}, sighted=("tv",)), state, 0) == {"tv"}


def test_dead_holders_do_not_block():
    state = world_state(locks={"tv": 2}, dead=(2,))
    assert blocked_locks(prog(["tv"], {"tv": 2}), state, 0) == set()


def test_interrupt_when_room_has_nothing_left():
    # agent 1 stands in the kitchen for the microwave; agent 0 locks it from afar
    state = world_state(assign={1: "room-2"})
    goals = ["microwave", "toilet"]
    res = coordinate(Proposal(0, ("microwave",), "room-1"), prog(goals), state, goals)
    assert res.requester.decision == SUPPORT
    (intr,) = res.interrupts
    assert intr.agent_id == 1 and intr.interrupt is True
    assert intr.action == "room-0" and intr.locks == ("toilet",)
    assert check_coordination(res, LeaderContext(Proposal(0, ("microwave",), "room-1"), prog(goals), state, tuple(goals))) == []


def test_check_coordination_catches_bad_results():
    state = world_state(assign={1: "room-0"}, locks={"tv": 1})
    ctx = LeaderContext(Proposal(0, (), "room-1"), prog(["tv"], {"tv": 1}), state, ("tv",))
    bad = CoordinationResult(
        (
            AgentDirective(0, "room-0", decision=SUPPORT, locks=("tv",)),
            AgentDirective(2, "frontier-1", interrupt=True),
        )
    )
    problems = check_coordination(bad, ctx)
    text = " | ".join(problems)
    assert "room assigned twice" in text
    assert "another agent's frontier" in text
    assert "may not transfer" in text
    assert "support must keep" in text


def test_directive_needs_exactly_one_flag():
    with pytest.raises(ValueError):
        AgentDirective(0, "room-1")
    with pytest.raises(ValueError):
        AgentDirective(0, "room-1", decision=SUPPORT, interrupt=True)


def test_options_from_rooms():
    opts = options_from_rooms({"room-2": ("kitchen", 3, ("stove",)), "room-1": ("bedroom", 1, ())}, 4, 9)
    assert [o.room_id for o in opts] == ["frontier-4", "room-1", "room-2"]


def test_make_oracle():
    assert make_oracle("rule").name == "rule"
    with pytest.raises(ValueError):
        make_oracle("crystal ball")


# ------------------------------------------------------------- remote


def test_parse_reply_proposal_and_coordination():
    p = parse_llm_reply('blah\n```json\n{"locks": ["tv"], "action": "room-1", "thoughts": "go"}\n```\n', 3)
    assert p == Proposal(3, ("tv",), "room-1", "go")
    c = parse_llm_reply(
        '```\n{"decision": "oppose", "action": "room-2", "locks": [], "thoughts": "",'
        ' "interrupts": [{"agent": 1, "action": "room-0", "locks": ["sink"], "thoughts": ""}]}\n```',
        0,
    )
    assert c.requester.decision == OPPOSE and c.interrupts[0].locks == ("sink",)


@pytest.mark.parametrize(
    "reply",
    [
        "no block",
        "```json\n[1, 2]\n```",
        "```json\n{not json}\n```",
        '```json\n{"action": "room-1", "mood": "happy"}\n```',
        '```json\n{"action": 3}\n```',
        '```json\n{"locks": "tv", "action": "room-1"}\n```',
        '```json\n{"decision": "maybe", "action": "room-1"}\n```',
        '```json\n{"decision": "support", "action": "room-1", "interrupts": [{"action": "x"}]}\n```',
        '```json\n{"thoughts": "hmm"}\n```',
    ],
)
def test_parse_reply_rejects(reply):
    with pytest.raises(ReplyFormatError):
        parse_llm_reply(reply, 0)


def chat(replies, seen):
    it = iter(replies)

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"choices": [{"message": {"content": next(it)}}]})

    return httpx.Client(transport=httpx.MockTransport(handler))


def member_ctx():
    opts = (RoomOption("room-1", "bathroom", 4.0), RoomOption("room-2", "living room", 2.0))
    return MemberContext(0, prog(["tv"]), AgentView((0, 0, 0)), ("tv",), (), opts)


def test_remote_oracle_uses_valid_reply():
    seen = []
    oracle = RemoteOracle("http://llm.test/v1", "m", client=chat(['```json\n{"locks": [], "action": "room-1"}\n```'], seen))
    assert oracle.propose(member_ctx()).action == "room-1"
    assert seen[0]["temperature"] == 0 and seen[0]["model"] == "m"
    assert "## OPTIONS" in seen[0]["messages"][0]["content"]
    assert oracle.degradations == 0


def test_remote_oracle_reprompts_once_then_falls_back():
    seen = []
    oracle = RemoteOracle("http://llm.test/v1", "m", client=chat(["nonsense", '```json\n{"action": "room-9"}\n```'], seen))
    p = oracle.propose(member_ctx())
    assert len(seen) == 2
    assert "could not be used" in seen[1]["messages"][0]["content"]
    assert p == RuleOracle().propose(member_ctx())
    assert oracle.degradations == 1 and oracle.events[0]["event"] == "degraded"


def test_remote_oracle_survives_http_errors():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(503)))
    oracle = RemoteOracle("http://llm.test/v1", "m", client=client)
    state = world_state()
    res = oracle.coordinate(LeaderContext(Proposal(0, (), "room-0"), prog(["tv"]), state, ("tv",)))
    assert res.requester.decision == SUPPORT
    assert oracle.degradations == 1
