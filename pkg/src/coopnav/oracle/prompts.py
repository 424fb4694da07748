"""Member and leader prompt rendering, and the inverse parser.

Every section is a run of ``key: <json>`` lines under a ``## NAME`` header,
so the text reads naturally and still parses back to the exact context.
"""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from string import Template

from ..state import AgentEntry, GlobalProgress, GlobalState, RoomInfo, TargetStatus
from .types import (
    AgentView,
    LeaderContext,
    MemberContext,
    PromptContext,
    Proposal,
    RoomOption,
    RoomSummary,
)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "data" / "templates"
MEMBER_SECTIONS = ("ID", "PROGRESS", "STATE", "GOALS", "HISTORY", "OPTIONS")
LEADER_SECTIONS = ("PROPOSAL", "GLOBAL PROGRESS", "GLOBAL STATE", "GOALS")
EMPTY_HISTORY = "(none)"


class PromptError(ValueError):
    pass


def _j(value) -> str:
    return json.dumps(value, ensure_ascii=False)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    return Template((TEMPLATE_DIR / f"{name}.txt").read_text(encoding="utf-8"))


def _fill(template: Template, fields: dict[str, str]) -> str:
    try:
        return template.substitute(fields)
    except KeyError as exc:
        raise PromptError(f"missing prompt field: {exc.args[0]}") from None


# ---------------------------------------------------------------- rendering


def _progress_lines(progress: GlobalProgress) -> str:
    lines = [f"targets: {_j(list(progress.targets))}"]
    for t, s in progress.status:
        lines.append(f"target: {_j({'class': t, 'state': s.state, 'holder': s.holder, 'sighted': s.sighted})}")
    return "\n".join(lines)


def _state_lines(view: AgentView) -> str:
    lines = [f"pose: {_j(list(view.pose))}", f"current_room: {_j(view.current_room)}"]
    for cls, cell in view.sightings:
        lines.append(f"sighting: {_j([cls, list(cell)])}")
    for r in view.rooms:
        d = {"id": r.room_id, "label": r.label, "objects": list(r.objects), "explored": r.explored}
        lines.append(f"room: {_j(d)}")
    return "\n".join(lines)


def _history_lines(history) -> str:
    if not history:
        return EMPTY_HISTORY
    return "\n".join(f"- {_j(h)}" for h in history)


def _options_lines(options) -> str:
    return "\n".join(
        f"option: {_j({'room': o.room_id, 'label': o.label, 'distance': o.distance, 'objects': list(o.objects)})}"
        for o in options
    )


def _goals_line(goals) -> str:
    return f"goals: {_j(list(goals))}"


def render_member(ctx: MemberContext) -> str:
    fields = {
        "agent_id": str(ctx.agent_id),
        "id_block": f"agent: {_j(ctx.agent_id)}",
        "progress_block": _progress_lines(ctx.progress),
        "state_block": _state_lines(ctx.view),
        "goals_block": _goals_line(ctx.goals),
        "history_block": _history_lines(ctx.history),
        "options_block": _options_lines(ctx.options),
    }
    return _fill(load_template("member"), fields)


def render_leader(ctx: LeaderContext) -> str:
    p = ctx.proposal
    proposal = "\n".join(
        [
            f"agent: {_j(p.agent_id)}",
            f"locks: {_j(list(p.locks))}",
            f"action: {_j(p.action)}",
            f"thoughts: {_j(p.thoughts)}",
        ]
    )
    state = [f"version: {_j(ctx.state.version)}", f"next_room: {_j(ctx.state.next_room)}"]
    state += [f"agent: {_j(e.to_dict())}" for e in ctx.state.agents]
    state += [f"room: {_j(r.to_dict())}" for r in ctx.state.rooms]
    fields = {
        "proposal_block": proposal,
        "global_progress_block": _progress_lines(ctx.progress),
        "global_state_block": "\n".join(state),
        "goals_block": _goals_line(ctx.goals),
    }
    return _fill(load_template("leader"), fields)


def render_prompts(ctx: PromptContext) -> tuple[str, str]:
    return render_member(ctx.member), render_leader(ctx.leader)


# ---------------------------------------------------------------- parsing


def _sections(text: str, names: tuple[str, ...]) -> dict[str, list[tuple[str, object]]]:
    headers = {f"## {n}": n for n in names}
    out: dict[str, list] = {}
    current = None
    for line in text.split("\n"):
        if line in headers:
            current = headers[line]
            if current in out:
                raise PromptError(f"section {current} appears twice")
            out[current] = []
            continue
        if current is None:
            continue
        if not line.strip():
            current = None
            continue
        if current == "HISTORY":
            if line == EMPTY_HISTORY:
                continue
            if not line.startswith("- "):
                raise PromptError(f"bad history line {line!r}")
            out[current].append(("-", json.loads(line[2:])))
            continue
        key, sep, raw = line.partition(": ")
        if not sep:
            raise PromptError(f"bad line in section {current}: {line!r}")
        try:
            out[current].append((key, json.loads(raw)))
        except json.JSONDecodeError as exc:
            raise PromptError(f"section {current}: {exc}") from None
    missing = [n for n in names if n not in out]
    if missing:
        raise PromptError(f"missing sections: {missing}")
    return out


def _one(entries, key):
    hits = [v for k, v in entries if k == key]
    if len(hits) != 1:
        raise PromptError(f"expected one {key!r} line, found {len(hits)}")
    return hits[0]


def _progress(entries) -> GlobalProgress:
    targets = tuple(_one(entries, "targets"))
    status = tuple(
        (d["class"], TargetStatus(d["state"], d["holder"], d["sighted"])) for k, d in entries if k == "target"
    )
    return GlobalProgress(targets, status)


def parse_member(text: str) -> MemberContext:
    s = _sections(text, MEMBER_SECTIONS)
    st = s["STATE"]
    view = AgentView(
        tuple(_one(st, "pose")),
        _one(st, "current_room"),
        tuple(
            RoomSummary(d["id"], d["label"], tuple(d["objects"]), d["explored"]) for k, d in st if k == "room"
        ),
        tuple((v[0], tuple(v[1])) for k, v in st if k == "sighting"),
    )
    options = tuple(RoomOption(d["room"], d["label"], d["distance"], tuple(d["objects"])) for k, d in s["OPTIONS"] if k == "option")
    return MemberContext(
        _one(s["ID"], "agent"),
        _progress(s["PROGRESS"]),
        view,
        tuple(_one(s["GOALS"], "goals")),
        tuple(v for _, v in s["HISTORY"]),
        options,
    )


def parse_leader(text: str) -> LeaderContext:
    s = _sections(text, LEADER_SECTIONS)
    p = s["PROPOSAL"]
    proposal = Proposal(_one(p, "agent"), tuple(_one(p, "locks")), _one(p, "action"), _one(p, "thoughts"))
    g = s["GLOBAL STATE"]
    state = GlobalState(
        tuple(AgentEntry.from_dict(d) for k, d in g if k == "agent"),
        tuple(RoomInfo.from_dict(d) for k, d in g if k == "room"),
        _one(g, "version"),
        _one(g, "next_room"),
    )
    return LeaderContext(proposal, _progress(s["GLOBAL PROGRESS"]), state, tuple(_one(s["GOALS"], "goals")))


def parse_prompts(member_text: str, leader_text: str) -> PromptContext:
    return PromptContext(parse_member(member_text), parse_leader(leader_text))
