import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopnav.mapping import (
    MapBoundsError,
    SemanticMap,
    coverage_fraction,
    dump_map,
    integrate,
    integrate_inplace,
    load_map,
)
from coopnav.world import AgentPose, Observation, Occupancy, sense

from conftest import full_map


def test_empty_map_is_unknown(house3):
    m = SemanticMap.empty(house3.shape)
    assert m.known_count() == 0
    assert m.frontier_cells() == []


def test_integrate_is_pure_and_matches_inplace(house3):
    obs = sense(house3, 1)
    base = SemanticMap.empty(house3.shape)
    out = integrate(base, obs)
    assert base.known_count() == 0
    other = SemanticMap.empty(house3.shape)
    assert integrate_inplace(other, obs)
    assert np.array_equal(out.occupancy, other.occupancy)
    assert out.digest() == other.digest()
    assert not integrate_inplace(other, obs)


def test_integrate_records_objects_and_ticks(house3):
    world = house3.with_agents([AgentPose((5, 4), 0)])
    m = integrate(SemanticMap.empty(world.shape), sense(world, 0))
    assert (6, 5) in m.semantics["tv"]
    assert m.observed_ticks[4, 5] == 0
    assert m.observed_ticks[0, 16] == -1


def test_out_of_bounds_observation_rejected(house3):
    bad = Observation(0, (((99, 0), Occupancy.FREE),), (), AgentPose((1, 1)), 0)
    with pytest.raises(MapBoundsError):
        integrate(SemanticMap.empty(house3.shape), bad)
    with pytest.raises(MapBoundsError):
        integrate_inplace(SemanticMap.empty(house3.shape), bad)


def test_frontier_cells_are_free_and_touch_unknown(house6):
    m = integrate(SemanticMap.empty(house6.shape), sense(house6, 0))
    occ = m.occupancy
    for x, y in m.frontier_cells():
        assert occ[y, x] == Occupancy.FREE
        assert any(occ[y + dy, x + dx] == Occupancy.UNKNOWN for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)))
    assert full_map(house6).frontier_cells() == []


def test_coverage_fraction(house3):
    m = full_map(house3)
    assert coverage_fraction(m, [(1, 1), (2, 2)]) == 1.0
    assert coverage_fraction(SemanticMap.empty(house3.shape), [(1, 1)]) == 0.0
    with pytest.raises(ValueError):
        coverage_fraction(m, [])


def test_dump_and_load_round_trip(tmp_path, house6):
    m = integrate(SemanticMap.empty(house6.shape), sense(house6, 2))
    m.semantics["shoe rack"] = {(12, 7)}
    index = dump_map(m, tmp_path)
    back = load_map(index)
    assert np.array_equal(back.occupancy, m.occupancy)
    assert back.semantics == m.semantics
    assert np.array_equal(back.observed_ticks, m.observed_ticks)
    assert (tmp_path / "map.occupancy.pgm").read_bytes().startswith(b"P5\n")


@given(st.lists(st.integers(0, 9), min_size=1, max_size=12))
def test_known_cells_never_shrink(order):
    from coopnav.world import load_scenario

    world = load_scenario("house6")
    free = world.free_cells()
    m = SemanticMap.empty(world.shape)
    known = 0
    for k in order:
        w = world.with_agents([AgentPose(free[(k * 37) % len(free)], 0)])
        integrate_inplace(m, sense(w, 0))
        assert m.known_count() >= known
        known = m.known_count()
        truth = np.where(world.walls, Occupancy.OBSTACLE, Occupancy.FREE)
        mask = m.known_mask()
        assert np.array_equal(m.occupancy[mask], truth[mask])
