import numpy as np
import pytest
from hypothesis import settings

from coopnav.mapping import SemanticMap
from coopnav.world import Occupancy, load_scenario

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def full_map(world) -> SemanticMap:
    """The map an agent would hold after seeing everything."""
    occ = np.where(world.walls, int(Occupancy.OBSTACLE), int(Occupancy.FREE)).astype(np.int8)
    smap = SemanticMap(occ)
    for o in world.objects:
        smap.semantics.setdefault(o.cls, set()).add(o.cell)
    return smap


def random_walls(rng: np.random.Generator, h: int, w: int, density: float) -> np.ndarray:
    """Random interior obstacles inside a solid border."""
    walls = rng.random((h, w)) < density
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    return walls


@pytest.fixture(scope="session")
def house3():
    return load_scenario("house3")


@pytest.fixture(scope="session")
def house6():
    return load_scenario("house6")


def coverage_tour(world, agent_id: int = 0):
    """Walk one agent to every free cell (nearest unvisited first), sensing
    after every step.  Returns the agent's map and the number of steps."""
    import dataclasses

    from coopnav.mapping import integrate_inplace
    from coopnav.motion import fmm, next_action
    from coopnav.world import NO_OP, sense, step

    world = dataclasses.replace(world.with_agents([world.agents[agent_id]]), max_steps=10**9)
    free = ~world.walls
    smap = SemanticMap.empty(world.shape)
    integrate_inplace(smap, sense(world, 0))
    todo = set(world.free_cells())
    steps = 0
    while todo:
        here = world.agents[0].cell
        todo.discard(here)
        if not todo:
            break
        reach = fmm(free, [here])
        goal = min(todo, key=lambda c: (reach.at(c), c[1], c[0]))
        field = fmm(free, [goal])
        while world.agents[0].cell != goal:
            p = world.agents[0]
            act = next_action(p.cell, p.heading, field)
            assert act != NO_OP
            world, _ = step(world, {0: act})
            steps += 1
            integrate_inplace(smap, sense(world, 0))
            todo.discard(world.agents[0].cell)
    return smap, steps


def iou(a, b) -> float:
    a, b = set(a), set(b)
    return len(a & b) / len(a | b)
