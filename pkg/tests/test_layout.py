"""
Tests for the intersection layout and conflict zones
"""
import math

import numpy as np
import pytest

from dica_sim.config import V_MAX
from dica_sim.geometry import corners_array, rects_overlap_matrix
from dica_sim.layout import (
    Approach, LayoutError, Movement, UnknownRouteError, build_layout, compute_conflict_zones,
    route_compatible, route_id, stopping_distance,
)


def test_twelve_routes(layout):
    assert len(layout.routes) == 12
    assert len(layout.lanes) == 12
    assert route_id(Approach.NORTH, Movement.LEFT) in layout.routes
    for route in layout.routes.values():
        assert np.all(np.diff(route.s) > 0)
        assert len(route.xs) >= 200


def test_route_length_ordering(layout):
    right = layout.route('S-right').total_length
    straight = layout.route('S-straight').total_length
    left = layout.route('S-left').total_length
    assert right < left < straight
    assert straight == pytest.approx(2 * layout.half_size)
    assert layout.max_route_length == pytest.approx(straight)


def test_routes_start_on_entrance_line(layout):
    h = layout.half_size
    for route in layout.routes_from(Approach.SOUTH):
        pose = route.pose_at(0.0)
        assert pose.y == pytest.approx(-h)
        assert pose.theta == pytest.approx(math.pi / 2)
    end = layout.route('S-straight').pose_at(layout.route('S-straight').total_length)
    assert end.y == pytest.approx(h)


def test_rotated_routes_have_equal_length(layout):
    for movement in Movement:
        lengths = [layout.route_for(a, movement).total_length for a in Approach]
        assert max(lengths) - min(lengths) < 1e-9


def test_poses_extrapolate_beyond_route(layout):
    route = layout.route('S-straight')
    before = route.pose_at(-2.0)
    assert before.y == pytest.approx(-layout.half_size - 2.0)
    assert before.x == pytest.approx(route.pose_at(0.0).x)


def test_turn_speed_caps(layout):
    assert layout.route('S-left').turn_speed(2.5) == pytest.approx(math.sqrt(2.5 * 10.5))
    assert layout.route('S-right').turn_speed(2.5) == pytest.approx(math.sqrt(2.5 * 1.75))
    assert layout.route('S-straight').turn_speed(2.5) == math.inf


def test_stopping_distance():
    assert stopping_distance(V_MAX, 4.5) == pytest.approx(42.0, abs=0.05)


def test_short_communication_region_rejected():
    with pytest.raises(LayoutError):
        build_layout(lane_width=3.5, comm_distance=10.0)


def test_invalid_sizes_rejected():
    with pytest.raises(LayoutError):
        build_layout(lane_width=0.0)
    with pytest.raises(LayoutError):
        build_layout(lane_width=3.5, left_turn_radius=20.0)


def test_crossing_routes_conflict(layout, zones):
    assert not route_compatible(zones, 'N-straight', 'W-straight')
    window = zones.window('N-straight', 'W-straight')
    assert window is not None
    # the crossing point sits mid-route
    middle = 0.5 * (window[0] + window[1])
    assert 0.0 < middle < layout.route('N-straight').total_length


def test_opposite_straight_routes_compatible(zones):
    assert route_compatible(zones, 'N-straight', 'S-straight')
    assert zones.window('N-straight', 'S-straight') is None


def test_opposite_right_turns_compatible(zones):
    assert route_compatible(zones, 'N-right', 'S-right')


def test_same_route_incompatible(zones):
    assert not route_compatible(zones, 'E-left', 'E-left')


def test_unknown_route(zones, layout):
    with pytest.raises(UnknownRouteError):
        route_compatible(zones, 'S-straight', 'Q-sideways')
    with pytest.raises(UnknownRouteError):
        layout.route('Q-sideways')


def test_zone_table_symmetric(zones):
    ids = zones.route_ids
    for a in ids:
        for b in ids:
            assert (zones.window(a, b) is None) == (zones.window(b, a) is None)


def test_opposing_left_turns_compatible(zones):
    assert route_compatible(zones, 'S-left', 'N-left')
    assert route_compatible(zones, 'E-left', 'W-left')
    assert not route_compatible(zones, 'S-left', 'E-left')


def test_tight_opposing_left_turns_cross():
    tight = build_layout(lane_width=3.5, comm_distance=50.0, left_turn_radius=3.5)
    zones = compute_conflict_zones(tight, length=5.0, width=1.8)
    assert not route_compatible(zones, 'S-left', 'N-left')


@pytest.mark.parametrize('a,b', [
    ('S-straight', 'W-straight'),
    ('S-left', 'N-straight'),
    ('E-right', 'S-straight'),
    ('W-left', 'N-left'),
])
def test_zones_contain_every_overlap(layout, zones, a, b):
    """Off-grid occupancy samples that overlap always fall inside the declared windows"""
    length, width, step = 5.0, 1.8, 0.1
    samples = {}
    for rid in (a, b):
        route = layout.route(rid)
        centers = np.arange(-length / 2.0 + 0.05, route.total_length + length / 2.0, step)
        x, y, th = route.poses_at(centers)
        samples[rid] = (centers, th, corners_array(x, y, th, length, width))
    ca, cb = samples[a], samples[b]
    hits = rects_overlap_matrix(ca[2], ca[1], cb[2], cb[1])
    assert hits.any()
    lo, hi = zones.window(a, b)
    for i, j in zip(*np.nonzero(hits)):
        s_a, s_b = ca[0][i], cb[0][j]
        assert lo <= s_a <= hi
        space = zones.space_window(a, b, s_a)
        assert space is not None
        assert space[0] <= s_b <= space[1]
