"""Generators of prompt contexts: a hypothesis strategy and a seeded plain
random version used by the acceptance run."""

import random

from hypothesis import strategies as st

from coopnav.oracle import AgentView, LeaderContext, MemberContext, PromptContext, Proposal, RoomOption, RoomSummary
from coopnav.state import FOUND, LOCKED, UNCLAIMED, AgentEntry, GlobalProgress, GlobalState, RoomInfo, TargetStatus

CLASSES = ["tv", "toilet", "microwave", "laptop", "bed", "sink", "stove", "sofa"]

text = st.text(max_size=20)
ids = st.integers(0, 7)
cells = st.tuples(st.integers(0, 40), st.integers(0, 40))
names = st.sampled_from(CLASSES)


@st.composite
def progress(draw):
    targets = draw(st.lists(names, unique=True, max_size=5))
    status = []
    for t in targets:
        state = draw(st.sampled_from([UNCLAIMED, LOCKED, FOUND]))
        holder = draw(ids) if state == LOCKED else None
        status.append((t, TargetStatus(state, holder, draw(st.booleans()))))
    return GlobalProgress(tuple(targets), tuple(status))


room_infos = st.builds(
    RoomInfo,
    text,
    text,
    st.lists(names, max_size=3).map(tuple),
    st.frozensets(cells, max_size=6),
    st.booleans(),
    st.lists(names, max_size=3).map(tuple),
)

entries = st.builds(
    AgentEntry,
    ids,
    st.none() | st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(0, 11)),
    st.none() | text,
    st.lists(names, max_size=3).map(tuple),
    st.lists(text, max_size=3).map(tuple),
    st.booleans(),
    st.lists(st.tuples(names, cells), max_size=2).map(tuple),
)

views = st.builds(
    AgentView,
    st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(0, 11)),
    st.none() | text,
    st.lists(st.builds(RoomSummary, text, text, st.lists(names, max_size=3).map(tuple), st.booleans()), max_size=3).map(tuple),
    st.lists(st.tuples(names, cells), max_size=3).map(tuple),
)

options = st.builds(
    RoomOption, text, text, st.floats(0, 1e4, allow_nan=False, allow_infinity=False), st.lists(names, max_size=3).map(tuple)
)


@st.composite
def prompt_contexts(draw):
    member = MemberContext(
        draw(ids),
        draw(progress()),
        draw(views),
        tuple(draw(st.lists(names, max_size=4))),
        tuple(draw(st.lists(text, max_size=4))),
        tuple(draw(st.lists(options, max_size=4))),
    )
    proposal = Proposal(draw(ids), tuple(draw(st.lists(names, max_size=3))), draw(text), draw(text))
    state = GlobalState(
        tuple(draw(st.lists(entries, max_size=4))),
        tuple(draw(st.lists(room_infos, max_size=3))),
        draw(st.integers(0, 1000)),
        draw(st.integers(0, 1000)),
    )
    leader = LeaderContext(proposal, draw(progress()), state, tuple(draw(st.lists(names, max_size=4))))
    return PromptContext(member, leader)


# ------------------------------------------------------------- plain random

ALPHABET = "abcdefghijklmnopqrstuvwxyz -_:#{}[]\"'\\\n\t\u00e9\u2028"


def _s(rng: random.Random, n: int = 12) -> str:
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, n)))


def _cell(rng):
    return (rng.randint(0, 40), rng.randint(0, 40))


def _progress(rng):
    targets = rng.sample(CLASSES, rng.randint(0, 5))
    status = []
    for t in targets:
        state = rng.choice([UNCLAIMED, LOCKED, FOUND])
        status.append((t, TargetStatus(state, rng.randint(0, 7) if state == LOCKED else None, rng.random() < 0.5)))
    return GlobalProgress(tuple(targets), tuple(status))


def random_context(rng: random.Random) -> PromptContext:
    objs = lambda: tuple(rng.sample(CLASSES, rng.randint(0, 3)))  # noqa: E731
    view = AgentView(
        (rng.randint(0, 40), rng.randint(0, 40), rng.randint(0, 11)),
        rng.choice([None, _s(rng)]),
        tuple(RoomSummary(_s(rng), _s(rng), objs(), rng.random() < 0.5) for _ in range(rng.randint(0, 3))),
        tuple((rng.choice(CLASSES), _cell(rng)) for _ in range(rng.randint(0, 3))),
    )
    member = MemberContext(
        rng.randint(0, 7),
        _progress(rng),
        view,
        objs(),
        tuple(_s(rng, 30) for _ in range(rng.randint(0, 4))),
        tuple(RoomOption(_s(rng), _s(rng), round(rng.uniform(0, 500), rng.randint(0, 6)), objs()) for _ in range(rng.randint(0, 4))),
    )
    agents = tuple(
        AgentEntry(
            i,
            rng.choice([None, (rng.randint(0, 40), rng.randint(0, 40), rng.randint(0, 11))]),
            rng.choice([None, _s(rng)]),
            objs(),
            tuple(_s(rng) for _ in range(rng.randint(0, 2))),
            rng.random() < 0.8,
            tuple((rng.choice(CLASSES), _cell(rng)) for _ in range(rng.randint(0, 2))),
        )
        for i in range(rng.randint(0, 4))
    )
    rooms = tuple(
        RoomInfo(_s(rng), _s(rng), objs(), frozenset(_cell(rng) for _ in range(rng.randint(0, 6))), rng.random() < 0.5, objs())
        for _ in range(rng.randint(0, 3))
    )
    state = GlobalState(agents, rooms, rng.randint(0, 1000), rng.randint(0, 1000))
    proposal = Proposal(rng.randint(0, 7), objs(), _s(rng), _s(rng, 40))
    return PromptContext(member, LeaderContext(proposal, _progress(rng), state, objs()))
