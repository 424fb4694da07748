"""Member proposals and leader coordination behind one interface, with a
rule-based and a remote chat-completion implementation."""

from __future__ import annotations

from typing import Protocol

from ..state import GlobalProgress, GlobalState
from .prompts import PromptError, parse_prompts, render_prompts
from .remote import RemoteOracle, ReplyFormatError, parse_llm_reply
from .rules import RuleOracle, check_coordination, check_proposal, ensure_valid
from .types import (
    OPPOSE,
    SUPPORT,
    AgentDirective,
    AgentView,
    CoordinationResult,
    InvalidResult,
    LeaderContext,
    MemberContext,
    NoCandidateRooms,
    OracleError,
    PromptContext,
    Proposal,
    RoomOption,
    RoomSummary,
)


class Oracle(Protocol):
    name: str

    def propose(self, ctx: MemberContext) -> Proposal: ...

    def coordinate(self, ctx: LeaderContext) -> CoordinationResult: ...


def make_oracle(kind: str = "rule", **kwargs) -> Oracle:
    if kind == "rule":
        return RuleOracle(**kwargs)
    if kind == "remote":
        return RemoteOracle(**kwargs)
    raise ValueError(f"unknown oracle {kind!r}")


def propose(
    agent_id: int,
    progress: GlobalProgress,
    view: AgentView,
    goals,
    history=(),
    options=(),
    impl: Oracle | None = None,
) -> Proposal:
    ctx = MemberContext(agent_id, progress, view, tuple(goals), tuple(history), tuple(options))
    impl = impl or RuleOracle()
    prop = impl.propose(ctx)
    ensure_valid(check_proposal(prop, ctx))
    return prop


def coordinate(
    proposal: Proposal, progress: GlobalProgress, state: GlobalState, goals, impl: Oracle | None = None
) -> CoordinationResult:
    ctx = LeaderContext(proposal, progress, state, tuple(goals))
    impl = impl or RuleOracle()
    result = impl.coordinate(ctx)
    ensure_valid(check_coordination(result, ctx))
    return result


__all__ = [
    "OPPOSE",
    "SUPPORT",
    "AgentDirective",
    "AgentView",
    "CoordinationResult",
    "InvalidResult",
    "LeaderContext",
    "MemberContext",
    "NoCandidateRooms",
    "Oracle",
    "OracleError",
    "PromptContext",
    "PromptError",
    "Proposal",
    "RemoteOracle",
    "ReplyFormatError",
    "RoomOption",
    "RoomSummary",
    "RuleOracle",
    "coordinate",
    "make_oracle",
    "parse_llm_reply",
    "parse_prompts",
    "propose",
    "render_prompts",
]
