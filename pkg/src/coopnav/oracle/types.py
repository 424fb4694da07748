from __future__ import annotations

from dataclasses import dataclass

from ..state import GlobalProgress, GlobalState
from ..world import Cell

SUPPORT, OPPOSE = "support", "oppose"


class OracleError(RuntimeError):
    pass


class NoCandidateRooms(OracleError):
    pass


class InvalidResult(OracleError):
    """A proposal or coordination result that breaks its invariants."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class RoomOption:
    room_id: str
    label: str
    distance: float
    objects: tuple[str, ...] = ()


@dataclass(frozen=True)
class RoomSummary:
    room_id: str
    label: str
    objects: tuple[str, ...] = ()
    explored: bool = False


@dataclass(frozen=True)
class AgentView:
    """What a member knows about its own situation when it asks for help."""

    pose: tuple[int, int, int]
    current_room: str | None = None
    rooms: tuple[RoomSummary, ...] = ()
    sightings: tuple[tuple[str, Cell], ...] = ()


@dataclass(frozen=True)
class Proposal:
    agent_id: int
    locks: tuple[str, ...]
    action: str
    thoughts: str = ""


@dataclass(frozen=True)
class AgentDirective:
    agent_id: int
    action: str
    decision: str | None = None
    interrupt: bool | None = None
    locks: tuple[str, ...] = ()
    thoughts: str = ""

    def __post_init__(self):
        if (self.decision is None) == (self.interrupt is None):
            raise ValueError("a directive carries either a decision or an interrupt flag, not both")
        if self.decision is not None and self.decision not in (SUPPORT, OPPOSE):
            raise ValueError(f"unknown decision {self.decision!r}")


@dataclass(frozen=True)
class CoordinationResult:
    directives: tuple[AgentDirective, ...]

    @property
    def requester(self) -> AgentDirective:
        return self.directives[0]

    @property
    def interrupts(self) -> tuple[AgentDirective, ...]:
        return self.directives[1:]


@dataclass(frozen=True)
class MemberContext:
    agent_id: int
    progress: GlobalProgress
    view: AgentView
    goals: tuple[str, ...]
    history: tuple[str, ...] = ()
    options: tuple[RoomOption, ...] = ()


@dataclass(frozen=True)
class LeaderContext:
    proposal: Proposal
    progress: GlobalProgress
    state: GlobalState
    goals: tuple[str, ...]


@dataclass(frozen=True)
class PromptContext:
    member: MemberContext
    leader: LeaderContext
