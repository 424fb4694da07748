import httpx
import numpy as np
import pytest

from coopnav.mapping import SemanticMap, integrate
from coopnav.rooms import (
    PANORAMA_FRAMES,
    DescriberError,
    FrameRecord,
    RemoteDescriber,
    RoomSegment,
    RoomStats,
    RoomUnseen,
    RuleDescriber,
    best_frame,
    describe,
    door_cells,
    is_explored,
    load_cooccurrence,
    map_frame,
    segment,
)
from coopnav.world import Occupancy, sense

from conftest import coverage_tour, full_map, iou


def test_cooccurrence_table_shape():
    t = load_cooccurrence()
    assert t.unknown_label in t.rooms
    assert t.value("bathroom", "toilet") > t.value("kitchen", "toilet")
    assert t.value("no such room", "toilet") == 0.0
    assert t.infer_label(["toilet", "sink"]) == "bathroom"
    assert t.infer_label([]) == t.unknown_label
    assert t.likely("kitchen", ["microwave", "bed"]) == ("microwave",)


def test_doors_in_house3(house3):
    doors = door_cells(full_map(house3))
    assert (8, 4) in doors and (4, 7) in doors
    assert len(doors) <= 4


@pytest.mark.parametrize("name", ["house3", "house6"])
def test_full_map_segmentation_matches_ground_truth(name, request):
    world = request.getfixturevalue(name)
    segs = segment(full_map(world))
    assert len(segs) == len(world.rooms)
    for gt in world.rooms:
        best = max(iou(gt.cells, s.mask) for s in segs)
        assert best >= 0.9
    assert all(is_explored(s) for s in segs)


def test_segment_ids_are_stable_as_map_grows(house6):
    m = integrate(SemanticMap.empty(house6.shape), sense(house6, 0))
    first = segment(m)
    m2 = integrate(m, sense(house6, 1))
    second = segment(m2, first)
    for old in first:
        grown = [s for s in second if s.mask & old.mask]
        assert any(s.room_id == old.room_id for s in grown)
    nums = [int(s.room_id.split("-")[1]) for s in second]
    assert len(set(nums)) == len(nums)


def test_partial_room_is_not_explored(house6):
    m = integrate(SemanticMap.empty(house6.shape), sense(house6, 0))
    segs = segment(m)
    assert any(not is_explored(s) for s in segs)


def test_segment_prefix(house3):
    segs = segment(full_map(house3), id_prefix="a1:room-")
    assert sorted(s.room_id for s in segs) == ["a1:room-0", "a1:room-1", "a1:room-2"]


def _frame(cells, objects=(), tick=0, heading=0):
    return FrameRecord(0, (1, 1), heading, frozenset(cells), tuple(objects), tick)


def test_best_frame_prefers_coverage_then_earlier():
    room = RoomSegment("r", frozenset({(1, 1), (1, 2), (1, 3)}))
    a = _frame({(1, 1)}, tick=0)
    b = _frame({(1, 1), (1, 2)}, tick=5)
    c = _frame({(1, 1), (1, 2)}, tick=3, heading=4)
    assert best_frame(room, [a, b, c]) is c
    with pytest.raises(RoomUnseen):
        best_frame(room, [_frame({(9, 9)})])


def test_rule_describer_labels_from_objects():
    room = RoomSegment("r", frozenset({(1, 1), (2, 1)}))
    frame = _frame(room.mask, [("toilet", (1, 1)), ("bed", (5, 5))])
    desc = describe(room, frame, RuleDescriber(), ["toilet", "tv"])
    assert desc.label == "bathroom"
    assert desc.object_list == ("toilet",)
    assert "toilet" in desc.likely_targets
    assert not desc.degraded


def _remote(handler):
    return RemoteDescriber("http://describer.test/describe", client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_remote_describer_request_and_response():
    seen = {}

    def handler(request):
        seen.update(__import__("json").loads(request.content))
        return httpx.Response(200, json={"label": "kitchen", "text": "pots", "likely_targets": ["microwave", "alien"]})

    desc = _remote(handler)(RoomStats("r", 12, 1, 1.0), ["stove"], ["microwave"])
    assert desc.label == "kitchen" and desc.likely_targets == ("microwave",)
    assert seen["objects"] == ["stove"] and seen["cell_count"] == 12


def test_remote_describer_failure_falls_back():
    room = RoomSegment("r", frozenset({(1, 1)}))
    frame = _frame(room.mask, [("stove", (1, 1))])
    bad = _remote(lambda request: httpx.Response(500))
    with pytest.raises(DescriberError):
        bad(RoomStats("r", 1, 0, 1.0), ["stove"], [])
    desc = describe(room, frame, bad, ["microwave"])
    assert desc.degraded and desc.label == "kitchen"


def test_map_frame_lists_known_objects(house3):
    m = full_map(house3)
    room = next(s for s in segment(m) if (2, 2) in s.mask)
    f = map_frame(0, room, m, 3)
    assert {c for c, _ in f.visible_objects} == {"bed", "pillow", "tv"}
    assert f.visible_cells == room.mask


def test_tour_covers_house3(house3):
    smap, steps = coverage_tour(house3)
    truth = np.where(house3.walls, Occupancy.OBSTACLE, Occupancy.FREE)
    assert np.array_equal(smap.occupancy, truth)
    assert steps > 0


def test_panorama_frame_count_constant():
    assert PANORAMA_FRAMES == 12
