"""
Tests for TSS generation, DTOT conversion and occupancy time intervals
"""
import math

import numpy as np
import pytest

from dica_sim.coordinator import ComplexityModel
from dica_sim.geometry import OrientedRect, Pose
from dica_sim.layout import Approach, Movement, Route
from dica_sim.motion import (
    DTOT, MotionError, Occupancy, VehicleSpec, dtot_to_tss, estimated_oti, exact_oti,
    finite_difference_kinematics, generate_tss, sagitta, tss_to_dtot,
)


H = 0.05


@pytest.fixture
def straight_30():
    """A 30 m straight route heading +y"""
    ys = np.linspace(0.0, 30.0, 601)
    return Route('T-straight', Approach.SOUTH, Movement.STRAIGHT, np.zeros_like(ys), ys,
                 np.full_like(ys, math.pi / 2))


@pytest.fixture
def spec():
    return VehicleSpec(1)


def constant_speed_dtot(spec, route, speed):
    tss = generate_tss(spec, route, 0.0, speed, speed, H)
    return tss_to_dtot(tss, spec)


def test_constant_speed_crossing_duration(spec, straight_30):
    tss = generate_tss(spec, straight_30, 0.0, spec.v_max, spec.v_max, H)
    assert tss.exit_time - tss.entry_time == pytest.approx(35.0 / spec.v_max, abs=H)
    assert np.allclose(tss.speeds, spec.v_max)
    tss.validate(spec, straight_30)


def test_rest_start_follows_acceleration_law(spec, straight_30):
    tss = generate_tss(spec, straight_30, 0.0, 0.0, spec.v_max, H)
    for k, state in enumerate(tss.states):
        t = k * H
        if spec.a_max * t >= spec.v_max:
            break
        assert state.s == pytest.approx(0.5 * spec.a_max * t * t)


def test_state_count_within_complexity_bound(spec, straight_30):
    tss = generate_tss(spec, straight_30, 0.0, 0.0, spec.v_max, H)
    model = ComplexityModel(h=H, v_max=spec.v_max, a_max=spec.a_max,
                            max_route_length=straight_30.total_length + spec.length)
    assert not model.long_route
    assert len(tss.states) <= math.ceil(model.n_bar) + 1


def test_entry_time_on_grid(spec, straight_30):
    tss = generate_tss(spec, straight_30, 1.25, 5.0, spec.v_max, H)
    assert tss.entry_time == pytest.approx(1.25)
    times = np.array([st.t for st in tss.states])
    assert np.allclose(np.diff(times), H)


def test_invalid_tss_requests(spec, straight_30):
    with pytest.raises(MotionError):
        generate_tss(spec, straight_30, 0.0, 15.0, 10.0, H)
    with pytest.raises(MotionError):
        generate_tss(spec, straight_30, 0.013, 5.0, 10.0, H)
    with pytest.raises(MotionError):
        generate_tss(spec, straight_30, 0.0, 5.0, spec.v_max + 5.0, H)
    with pytest.raises(MotionError):
        generate_tss(spec, None, 0.0, 5.0, 10.0, H)


def test_turn_speed_caps_tss(spec, layout):
    route = layout.route('S-right')
    cap = route.turn_speed(layout.lateral_accel)
    tss = generate_tss(spec, route, 0.0, cap, spec.v_max, H, layout.lateral_accel)
    assert np.all(tss.speeds <= cap + 1e-9)


def test_validate_rejects_short_tss(spec, straight_30):
    tss = generate_tss(spec, straight_30, 0.0, 10.0, 10.0, H)
    cut = type(tss)(route=tss.route, states=tss.states[:5], h=H)
    with pytest.raises(MotionError):
        cut.validate(spec, straight_30)


def test_vehicle_spec_limits():
    with pytest.raises(MotionError):
        VehicleSpec(1, length=0.0)
    with pytest.raises(MotionError):
        VehicleSpec(1, a_min=-4.5)


def test_dtot_mapping_and_round_trip(spec, straight_30):
    tss = generate_tss(spec, straight_30, 0.0, 10.0, 10.0, H)
    dtot = tss_to_dtot(tss, spec)
    assert len(dtot) == len(tss.states)
    for occ, state in zip(dtot.occupancies, tss.states):
        assert occ.t == state.t
        assert occ.rect.length == spec.length and occ.rect.width == spec.width
    back = dtot_to_tss(dtot)
    assert [st.t for st in back.states] == [st.t for st in tss.states]
    assert [st.pose for st in back.states] == [st.pose for st in tss.states]


def test_straight_centers_spaced_by_speed(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    ys = np.array([o.rect.center.y for o in dtot.occupancies])
    assert np.allclose(np.diff(ys), 10.0 * H)
    assert all(o.rect.center.theta == pytest.approx(math.pi / 2) for o in dtot.occupancies)


def test_shifted_dtot_shifts_tss(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    later = dtot_to_tss(dtot.shifted(4))
    for a, b in zip(later.states, dtot_to_tss(dtot).states):
        assert a.t == pytest.approx(b.t + 4 * H)
        assert a.pose == b.pose


def test_empty_dtot_rejected(spec):
    with pytest.raises(MotionError):
        dtot_to_tss(DTOT(vin=1, route='S-straight', occupancies=(), spec=spec, h=H))


def test_exact_oti_constant_speed(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    iv = exact_oti(dtot, 35)
    assert iv.width == pytest.approx(2 * spec.length / 10.0, abs=2 * H + 1e-6)
    assert iv.lo < dtot.time_at(35) < iv.hi


def test_exact_oti_first_occupancy(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    assert exact_oti(dtot, 0).lo == dtot.entry_time
    assert exact_oti(dtot, len(dtot) - 1).hi == dtot.exit_time


def test_exact_oti_monotone(spec, layout):
    route = layout.route('S-left')
    tss = generate_tss(spec, route, 0.0, 2.0, spec.v_max, H, layout.lateral_accel)
    dtot = tss_to_dtot(tss, spec)
    bounds = [exact_oti(dtot, k) for k in range(len(dtot))]
    assert all(a.lo <= b.lo and a.hi <= b.hi for a, b in zip(bounds, bounds[1:]))


def test_finite_difference_kinematics():
    v_minus, v_plus, v, a = finite_difference_kinematics(0.0, 0.5, 1.1, 0.05)
    assert v_minus == pytest.approx(10.0)
    assert v_plus == pytest.approx(12.0)
    assert v == pytest.approx(11.0)
    assert a == pytest.approx(40.0)
    assert finite_difference_kinematics(None, 0.5, 1.1, 0.05)[0] == pytest.approx(12.0)


def test_estimated_oti_constant_speed(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    est, exact = estimated_oti(dtot, 35), exact_oti(dtot, 35)
    assert abs(est.lo - exact.lo) <= 2 * H + 1e-6
    assert abs(est.hi - exact.hi) <= 2 * H + 1e-6


def test_estimated_oti_accelerating(spec, straight_30):
    dtot = tss_to_dtot(generate_tss(spec, straight_30, 0.0, 3.0, spec.v_max, H), spec)
    checked = 0
    for k in range(1, len(dtot) - 1):
        exact = exact_oti(dtot, k)
        if exact.lo == dtot.entry_time or exact.hi == dtot.exit_time:
            continue
        est = estimated_oti(dtot, k)
        assert abs(est.lo - exact.lo) <= 4 * H + 1e-6
        assert abs(est.hi - exact.hi) <= 4 * H + 1e-6
        checked += 1
    assert checked > 10


def test_estimated_oti_random_constant_speeds(spec, straight_30):
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(500):
        speed = float(rng.uniform(4.0, spec.v_max))
        dtot = constant_speed_dtot(spec, straight_30, speed)
        k = int(rng.integers(0, len(dtot)))
        est, exact = estimated_oti(dtot, k), exact_oti(dtot, k)
        assert est.lo <= exact.lo + 1e-9 and est.hi >= exact.hi - 1e-9
        if exact.lo > dtot.entry_time:
            assert exact.lo - est.lo <= 2 * H + 1e-6
        if exact.hi < dtot.exit_time:
            assert est.hi - exact.hi <= 2 * H + 1e-6
        checked += 1
    assert checked == 500


def test_estimated_oti_random_trapezoidal_profiles(spec, straight_30):
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(25):
        entry = float(rng.uniform(3.0, 12.0))
        cap = float(rng.uniform(entry, spec.v_max))
        dtot = tss_to_dtot(generate_tss(spec, straight_30, 0.0, entry, cap, H), spec)
        for k in rng.integers(1, len(dtot) - 1, size=20):
            est, exact = estimated_oti(dtot, int(k)), exact_oti(dtot, int(k))
            assert est.lo <= exact.lo + 1e-9 and est.hi >= exact.hi - 1e-9
            if exact.lo > dtot.entry_time:
                assert exact.lo - est.lo <= 4 * H + 1e-6
            if exact.hi < dtot.exit_time:
                assert est.hi - exact.hi <= 4 * H + 1e-6
            checked += 1
    assert checked == 500


@pytest.mark.parametrize('rid', ['S-left', 'E-right', 'W-left'])
def test_estimated_oti_contains_exact_on_turns(spec, layout, rid):
    route = layout.route(rid)
    cap = min(route.turn_speed(layout.lateral_accel), spec.v_max)
    for entry in (2.0, 0.5 * cap, cap):
        tss = generate_tss(spec, route, 0.0, entry, spec.v_max, H, layout.lateral_accel)
        dtot = tss_to_dtot(tss, spec)
        for k in range(len(dtot)):
            est, exact = estimated_oti(dtot, k), exact_oti(dtot, k)
            assert est.lo <= exact.lo + 1e-9
            assert est.hi >= exact.hi - 1e-9


def test_estimated_oti_stationary_uses_full_span(spec):
    rect = OrientedRect(Pose(0.0, 0.0, 0.0), spec.length, spec.width)
    occs = tuple(Occupancy(k * H, rect, k, 0.0) for k in range(10))
    dtot = DTOT(vin=1, route='S-straight', occupancies=occs, spec=spec, h=H)
    iv = estimated_oti(dtot, 4)
    assert (iv.lo, iv.hi) == (dtot.entry_time, dtot.exit_time)


def test_estimated_oti_single_occupancy(spec):
    rect = OrientedRect(Pose(0.0, 0.0, 0.0), spec.length, spec.width)
    dtot = DTOT(vin=1, route='S-straight', occupancies=(Occupancy(2.0, rect, 0, 0.0),),
                spec=spec, h=H)
    iv = estimated_oti(dtot, 0)
    assert iv.lo == iv.hi == 2.0


def test_oti_index_out_of_range(spec, straight_30):
    dtot = constant_speed_dtot(spec, straight_30, 10.0)
    with pytest.raises(IndexError):
        exact_oti(dtot, len(dtot))
    with pytest.raises(IndexError):
        estimated_oti(dtot, -1)


def test_sagitta():
    assert sagitta(7.0, 5.0) == pytest.approx(7.0 - math.sqrt(49.0 - 6.25))
    assert sagitta(1.75, 5.0) == 1.75
