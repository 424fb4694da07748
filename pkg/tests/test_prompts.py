import random
from pathlib import Path

import pytest
from hypothesis import given

from coopnav.oracle import AgentView, MemberContext, PromptError, RoomOption, parse_prompts, render_prompts
from coopnav.oracle.prompts import EMPTY_HISTORY, parse_leader, parse_member, render_member
from coopnav.state import LOCKED, GlobalProgress, TargetStatus

from contexts import prompt_contexts, random_context

GOLDEN = Path(__file__).parent / "data" / "member_prompt.txt"


def small_member():
    progress = GlobalProgress(("tv", "toilet"), (("tv", TargetStatus(LOCKED, 1, True)), ("toilet", TargetStatus())))
    view = AgentView((3, 4, 0), "room-0", (), (("tv", (6, 5)),))
    return MemberContext(0, progress, view, ("tv", "toilet"), (), (RoomOption("room-1", "bathroom", 7.5, ("sink",)),))


def test_member_prompt_golden():
    assert render_member(small_member()) == GOLDEN.read_text(encoding="utf-8")


def test_golden_has_every_section_once():
    text = GOLDEN.read_text(encoding="utf-8")
    for name in ("ID", "PROGRESS", "STATE", "GOALS", "HISTORY", "OPTIONS"):
        assert text.count(f"## {name}\n") == 1
    assert EMPTY_HISTORY in text


@given(prompt_contexts())
def test_render_parse_round_trip(ctx):
    assert parse_prompts(*render_prompts(ctx)) == ctx


def test_round_trip_with_awkward_characters():
    rng = random.Random(3)
    for _ in range(30):
        ctx = random_context(rng)
        assert parse_prompts(*render_prompts(ctx)) == ctx


def test_missing_section_is_an_error():
    text = render_member(small_member()).replace("## GOALS\n", "")
    with pytest.raises(PromptError):
        parse_member(text)


def test_duplicate_section_is_an_error():
    text = render_member(small_member())
    with pytest.raises(PromptError):
        parse_member(text + "\n## GOALS\ngoals: []\n")


def test_bad_json_line_is_an_error():
    text = render_member(small_member()).replace('goals: ["tv", "toilet"]', "goals: [tv")
    with pytest.raises(PromptError):
        parse_member(text)


def test_leader_parse_requires_single_lines():
    ctx = random_context(random.Random(1))
    _, leader = render_prompts(ctx)
    with pytest.raises(PromptError):
        parse_leader(leader.replace("## PROPOSAL\n", "## PROPOSAL\nagent: 9\n"))
