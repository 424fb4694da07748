import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopnav.world import (
    FORWARD,
    NO_OP,
    TURN_LEFT,
    TURN_RIGHT,
    Action,
    AgentCrashed,
    AgentPose,
    Occupancy,
    ScenarioError,
    TargetSet,
    declare,
    default_max_steps,
    line_cells,
    load_scenario,
    outcomes,
    sense,
    step,
    validate_document,
)

GRID = "#######\n#.....#\n#.#...#\n#.....#\n#######\n"


def doc(**over):
    d = {
        "name": "tiny",
        "grid": GRID,
        "rooms": {"all": [{"rect": [1, 1, 5, 3]}]},
        "objects": [{"class": "tv", "x": 5, "y": 3}, {"class": "bed", "x": 1, "y": 1}],
        "agents": [{"x": 1, "y": 3, "heading": 3}],
        "targets": ["tv"],
        "max_steps": 50,
    }
    d.update(over)
    return d


def test_fixtures_load(house3, house6):
    assert house3.shape == (12, 17)
    assert len(house3.rooms) == 3 and len(house6.rooms) == 6
    assert house3.targets.classes == ("tv", "toilet", "microwave")
    assert house3.max_steps == 800


def test_grid_with_wall_inside_room_is_reported():
    with pytest.raises(ScenarioError) as exc:
        load_scenario(doc())
    assert any("(2, 2)" in d for d in exc.value.diagnostics)


def test_clean_document_loads():
    rooms = {"all": [[1, 1], [2, 1], [3, 1], [4, 1], [5, 1], [1, 2], [3, 2], [4, 2], [5, 2]]
             + [[x, 3] for x in range(1, 6)]}
    world = load_scenario(doc(rooms=rooms))
    assert world.free_cells()[0] == (1, 1)
    assert world.room_of((3, 2)) == "all"
    assert world.room_of((2, 2)) is None


def test_object_on_wall_names_the_cell():
    diags = validate_document(doc(objects=[{"class": "tv", "x": 0, "y": 0}]))
    assert any("object tv on non-free cell (0, 0)" in d for d in diags)


def test_overlapping_rooms_name_both_ids():
    rooms = {"a": [{"rect": [1, 1, 3, 1]}], "b": [{"rect": [3, 1, 5, 1]}]}
    diags = validate_document(doc(rooms=rooms))
    assert any("a" in d and "b" in d and "overlap" in d and "(3, 1)" in d for d in diags)


def test_missing_keys_are_schema_errors():
    diags = validate_document({"grid": GRID})
    assert diags and all("missing key" in d for d in diags)


def test_bundled_fixtures_validate_clean():
    assert validate_document("house3") == []
    assert validate_document("house6") == []


def test_default_max_steps_grows_with_free_area():
    assert default_max_steps(100) == 100
    assert default_max_steps(400) == 200


def test_target_set_requires_classes():
    with pytest.raises(ValueError):
        TargetSet((), ())
    with pytest.raises(ValueError):
        TargetSet(("tv",), ("sofa",))


def test_action_parsing_round_trip():
    for a in (FORWARD, TURN_LEFT, TURN_RIGHT, NO_OP, declare("tv")):
        assert Action.parse(str(a)) == a
    with pytest.raises(ValueError):
        Action("jump")
    with pytest.raises(ValueError):
        Action("declare")


# ------------------------------------------------------------- line of sight


def bresenham_oracle(a, b):
    """Textbook integer Bresenham, all octants."""
    x0, y0 = a
    x1, y1 = b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if (x0, y0) == (x1, y1):
            return out
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


@given(st.tuples(st.integers(-8, 8), st.integers(-8, 8)), st.tuples(st.integers(-8, 8), st.integers(-8, 8)))
def test_line_cells_matches_bresenham(a, b):
    cells = line_cells(a, b)
    assert cells[0] == a and cells[-1] == b
    assert set(cells) == set(bresenham_oracle(a, b))


def brute_visible(world, origin, rng_cells):
    h, w = world.walls.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if max(abs(x - origin[0]), abs(y - origin[1])) > rng_cells:
                continue
            ray = bresenham_oracle(origin, (x, y))
            if all(not world.walls[cy, cx] for cx, cy in ray[1:-1]):
                out.add((x, y))
    return out


def test_sense_matches_brute_force_raycast(house6):
    for cell in house6.free_cells()[::7]:
        world = house6.with_agents([AgentPose(cell, 0)])
        obs = sense(world, 0)
        seen = {c for c, _ in obs.visible_cells}
        assert seen == brute_visible(world, cell, world.sensor_range)
        for c, occ in obs.visible_cells:
            assert (occ == Occupancy.OBSTACLE) == bool(world.walls[c[1], c[0]])


def test_sense_does_not_mutate(house3):
    before = house3.fingerprint()
    walls = house3.walls.copy()
    sense(house3, 0)
    assert house3.fingerprint() == before
    assert np.array_equal(walls, house3.walls)


def test_sense_narrow_fov_sees_a_subset(house3):
    full = {c for c, _ in sense(house3, 1).visible_cells}
    cone = {c for c, _ in sense(house3, 1, fov_deg=90.0).visible_cells}
    assert cone < full


def test_sense_unknown_or_crashed_agent(house3):
    with pytest.raises(KeyError):
        sense(house3, 9)
    with pytest.raises(AgentCrashed):
        sense(house3.crash(0), 0)


# ------------------------------------------------------------- dynamics


def test_forward_moves_or_bumps(house3):
    w = house3.with_agents([AgentPose((1, 1), 0)])
    w2, ev = step(w, {0: FORWARD})
    assert w2.agents[0].cell == (1, 1) and ev[0].kind == "bump"
    w3, ev = step(w2, {0: TURN_RIGHT})
    assert w3.agents[0].heading == 1
    w4, ev = step(w3, {0: FORWARD})
    assert ev[0].kind == "bump" and dict(ev[0].data)["reason"] == "diagonal heading"
    w5, _ = step(dataclasses.replace(w4, agents=(AgentPose((1, 1), 3),)), {0: FORWARD})
    assert w5.agents[0].cell == (2, 1)
    assert w5.tick == 4


def test_declare_success_and_failure_with_cooldown(house3):
    w = house3.with_agents([AgentPose((6, 4), 0), AgentPose((1, 1), 0)])
    w, ev = step(w, {0: declare("tv"), 1: declare("toilet")})
    res = {o.agent_id: o.result for o in outcomes(ev)}
    assert res == {0: "success", 1: "failure"}
    assert "tv" not in w.targets.remaining
    w, ev = step(w, {1: declare("toilet")})
    assert ev[0].kind == "declare_cooldown"


def test_episode_done_when_targets_found_or_steps_exhausted(house3):
    w = dataclasses.replace(house3, max_steps=2)
    w, _ = step(w, {})
    assert not w.done
    w, ev = step(w, {})
    assert w.done and ev[-1].kind == "episode_done"
    w2, ev2 = step(w, {0: FORWARD})
    assert w2 is w and ev2[0].kind == "episode_done"


def test_crashed_agent_actions_rejected(house3):
    w, ev = step(house3.crash(1), {1: FORWARD})
    assert ev[0].kind == "rejected"


@given(st.lists(st.sampled_from(["forward", "turn_left", "turn_right", "no_op"]), max_size=60))
def test_random_actions_never_enter_walls(actions):
    world = load_scenario("house3")
    for a in actions:
        world, _ = step(world, {0: Action(a), 1: Action(a)})
        for p in world.agents:
            assert world.is_free(p.cell)
            assert 0 <= p.heading < 12
    assert world.tick == min(len(actions), world.max_steps)
