"""Chat-completion client that asks a hosted model for proposals and
coordination, validating every answer and falling back to the rule oracle."""

from __future__ import annotations

import json
import logging
import os
import re

import httpx

from .prompts import render_leader, render_member
from .rules import RuleOracle, check_coordination, check_proposal
from .types import (
    OPPOSE,
    SUPPORT,
    AgentDirective,
    CoordinationResult,
    LeaderContext,
    MemberContext,
    Proposal,
)

log = logging.getLogger(__name__)

_FENCE = re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.DOTALL)
_PROPOSAL_KEYS = {"locks", "action", "thoughts", "agent"}
_COORD_KEYS = {"decision", "action", "locks", "thoughts", "interrupts", "agent"}
_INTERRUPT_KEYS = {"agent", "action", "locks", "thoughts"}

FORMAT_REMINDER = (
    "\n\nYour previous reply could not be used ({error}). "
    "Answer again with exactly one fenced json block and nothing else."
)


class ReplyFormatError(ValueError):
    pass


def _str_list(value, what: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ReplyFormatError(f"{what} must be a list of strings")
    return tuple(value)


def _text(value, what: str) -> str:
    if not isinstance(value, str):
        raise ReplyFormatError(f"{what} must be a string")
    return value


def _agent(value, default: int | None) -> int:
    if value is None:
        if default is None:
            raise ReplyFormatError("reply does not say which agent it is for")
        return default
    if not isinstance(value, int) or isinstance(value, bool):
        raise ReplyFormatError("agent must be an integer")
    return value


def parse_llm_reply(text: str, agent_id: int | None = None) -> Proposal | CoordinationResult:
    """Strictly parse the first fenced block of a model reply.

    A block with a ``decision`` key is a coordination result; otherwise it is
    a proposal.  Unknown keys and wrong types are rejected."""
    m = _FENCE.search(text)
    if m is None:
        raise ReplyFormatError("no fenced block in reply")
    try:
        data = json.loads(m.group(1))
    except json.JSONDecodeError as exc:
        raise ReplyFormatError(f"fenced block is not valid json: {exc}") from None
    if not isinstance(data, dict):
        raise ReplyFormatError("fenced block must hold an object")

    if "decision" in data:
        extra = set(data) - _COORD_KEYS
        if extra:
            raise ReplyFormatError(f"unexpected keys {sorted(extra)}")
        if data["decision"] not in (SUPPORT, OPPOSE):
            raise ReplyFormatError(f"decision must be {SUPPORT!r} or {OPPOSE!r}")
        first = AgentDirective(
            _agent(data.get("agent"), agent_id),
            _text(data.get("action"), "action"),
            decision=data["decision"],
            locks=_str_list(data.get("locks", []), "locks"),
            thoughts=_text(data.get("thoughts", ""), "thoughts"),
        )
        interrupts = data.get("interrupts", [])
        if not isinstance(interrupts, list):
            raise ReplyFormatError("interrupts must be a list")
        rest = []
        for item in interrupts:
            if not isinstance(item, dict) or set(item) - _INTERRUPT_KEYS or "agent" not in item:
                raise ReplyFormatError("each interrupt needs agent, action, locks, thoughts")
            rest.append(
                AgentDirective(
                    _agent(item["agent"], None),
                    _text(item.get("action"), "interrupt action"),
                    interrupt=True,
                    locks=_str_list(item.get("locks", []), "interrupt locks"),
                    thoughts=_text(item.get("thoughts", ""), "interrupt thoughts"),
                )
            )
        return CoordinationResult((first, *rest))

    extra = set(data) - _PROPOSAL_KEYS
    if extra:
        raise ReplyFormatError(f"unexpected keys {sorted(extra)}")
    if "action" not in data:
        raise ReplyFormatError("proposal needs an action")
    return Proposal(
        _agent(data.get("agent"), agent_id),
        _str_list(data.get("locks", []), "locks"),
        _text(data["action"], "action"),
        _text(data.get("thoughts", ""), "thoughts"),
    )


class RemoteOracle:
    """Chat-completion backed oracle.

    Each call gets one reprompt with a format reminder; after that the rule
    oracle answers and the call is counted in ``degradations``."""

    name = "remote"

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        timeout: float = 30.0,
        max_tokens: int = 512,
        fallback: RuleOracle | None = None,
        client: httpx.Client | None = None,
        api_key: str | None = None,
    ):
        self.endpoint = endpoint or os.environ.get("COOPNAV_LLM_ENDPOINT", "http://localhost:8000/v1/chat/completions")
        self.model = model or os.environ.get("COOPNAV_LLM_MODEL", "default")
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.fallback = fallback or RuleOracle()
        self.client = client or httpx.Client(timeout=timeout)
        self.api_key = api_key if api_key is not None else os.environ.get("COOPNAV_LLM_API_KEY")
        self.degradations = 0
        self.events: list[dict] = []

    def _ask(self, prompt: str) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "model": self.model,
            "temperature": 0,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        resp = self.client.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ReplyFormatError(f"unexpected response body: {exc}") from None

    def _attempt(self, prompt: str, agent_id: int, kind: type, check) -> object:
        error = None
        for attempt in range(2):
            text = prompt if attempt == 0 else prompt + FORMAT_REMINDER.format(error=error)
            try:
                result = parse_llm_reply(self._ask(text), agent_id)
                if not isinstance(result, kind):
                    raise ReplyFormatError(f"expected a {kind.__name__}")
                problems = check(result)
                if problems:
                    raise ReplyFormatError("; ".join(problems))
                return result
            except (ReplyFormatError, ValueError, httpx.HTTPError) as exc:
                error = str(exc)
                log.info("remote oracle attempt %d failed: %s", attempt + 1, error)
        self.degradations += 1
        self.events.append({"event": "degraded", "agent": agent_id, "kind": kind.__name__, "error": error})
        log.warning("remote oracle degraded to rules for agent %d: %s", agent_id, error)
        return None

    def propose(self, ctx: MemberContext) -> Proposal:
        result = self._attempt(render_member(ctx), ctx.agent_id, Proposal, lambda p: check_proposal(p, ctx))
        return result if result is not None else self.fallback.propose(ctx)

    def coordinate(self, ctx: LeaderContext) -> CoordinationResult:
        result = self._attempt(
            render_leader(ctx),
            ctx.proposal.agent_id,
            CoordinationResult,
            lambda r: check_coordination(r, ctx),
        )
        return result if result is not None else self.fallback.coordinate(ctx)
