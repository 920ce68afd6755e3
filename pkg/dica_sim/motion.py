"""
Vehicle kinematics

Timed state sequences (TSS) proposed by vehicles, their conversion to
discrete-time occupancy trajectories (DTOT), and occupancy time intervals
(OTI), computed exactly by scanning or estimated in constant time.

Arc length `s` on states and occupancies is front-bumper progress past the
entrance line; the vehicle center sits half a vehicle length behind it.
"""
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from .geometry import OrientedRect, Pose, TimeInterval, normalize_angle, rects_overlap
from .layout import Route


# Speeds below this are treated as stationary by the OTI estimator (m/s)
MIN_ESTIMATION_SPEED = 0.1

_TIME_TOL = 1e-6


class MotionError(ValueError):
    """Raised for invalid kinematic inputs or malformed trajectories"""
    pass


@dataclass(frozen=True)
class VehicleSpec:
    """Size and kinematic limits of one vehicle"""
    vin: int
    length: float = 5.0
    width: float = 1.8
    a_max: float = 2.0
    a_min: float = 4.5
    v_max: float = 70.0 / 3.6

    def __post_init__(self):
        for name in ('length', 'width', 'a_max', 'a_min', 'v_max'):
            if getattr(self, name) <= 0:
                raise MotionError(f"Invalid vehicle {name}: {getattr(self, name)}. Must be positive")


@dataclass(frozen=True)
class TimedState:
    t: float
    pose: Pose
    s: float


@dataclass(frozen=True)
class TSS:
    """Timed state sequence from the entrance line until fully past the region"""
    route: str
    states: Tuple[TimedState, ...]
    h: float
    entry_speed: float = 0.0

    @property
    def entry_time(self) -> float:
        return self.states[0].t

    @property
    def exit_time(self) -> float:
        return self.states[-1].t

    @property
    def speeds(self) -> np.ndarray:
        """Average speed over each step, one value per consecutive pair"""
        s = np.array([st.s for st in self.states])
        return np.diff(s) / self.h

    def validate(self, spec: VehicleSpec, route: Route):
        """
        Check the sequence against its route and the vehicle limits

        Raises:
            MotionError: If any TSS invariant is broken
        """
        if not self.states:
            raise MotionError("TSS has no states")
        if self.route != route.id:
            raise MotionError(f"TSS route {self.route} does not match {route.id}")
        times = np.array([st.t for st in self.states])
        s = np.array([st.s for st in self.states])
        if len(times) > 1 and np.any(np.abs(np.diff(times) - self.h) > _TIME_TOL):
            raise MotionError("TSS times must increase by exactly h")
        if abs(times[0] / self.h - round(times[0] / self.h)) > _TIME_TOL:
            raise MotionError(f"TSS entry time {times[0]} is not on the step grid")
        if abs(s[0]) > _TIME_TOL:
            raise MotionError(f"TSS must start at the entrance line, got s={s[0]}")
        if s[-1] < route.total_length + spec.length - _TIME_TOL:
            raise MotionError("TSS ends before the vehicle has left the region")
        speeds = np.diff(s) / self.h
        if np.any(speeds < -_TIME_TOL):
            raise MotionError("TSS arc length must be non-decreasing")
        if np.any(speeds > spec.v_max + 1e-6):
            raise MotionError("TSS exceeds the maximum allowed speed")
        if len(speeds) > 1:
            accels = np.diff(speeds) / self.h
            if np.any(accels > spec.a_max + 1e-6) or np.any(accels < -spec.a_min - 1e-6):
                raise MotionError("TSS acceleration outside the vehicle limits")
        return self


@dataclass(frozen=True)
class Occupancy:
    """One timed rectangle of a DTOT"""
    t: float
    rect: OrientedRect
    index: int
    s: float

    @property
    def s_center(self) -> float:
        return self.s - self.rect.length / 2.0


@dataclass(frozen=True)
class DTOT:
    """Discrete-time occupancies trajectory of one vehicle"""
    vin: int
    route: str
    occupancies: Tuple[Occupancy, ...]
    spec: VehicleSpec
    h: float
    entry_speed: float = 0.0

    def __len__(self):
        return len(self.occupancies)

    @property
    def entry_time(self) -> float:
        return self.occupancies[0].t

    @property
    def exit_time(self) -> float:
        return self.occupancies[-1].t

    @property
    def exit_speed(self) -> float:
        if len(self.occupancies) < 2:
            return 0.0
        return (self.occupancies[-1].s - self.occupancies[-2].s) / self.h

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.occupancies])

    @cached_property
    def s_centers(self) -> np.ndarray:
        return np.array([o.s_center for o in self.occupancies])

    def time_at(self, k: int) -> float:
        return self.occupancies[k].t

    def shifted(self, steps: int) -> 'DTOT':
        """Copy with every occupancy time delayed by `steps` sampling periods"""
        occs = tuple(
            Occupancy(snap_to_grid(o.t, self.h, steps), o.rect, o.index, o.s)
            for o in self.occupancies
        )
        return replace(self, occupancies=occs)

    def occupancy_at_time(self, t: float) -> Optional[Occupancy]:
        if not self.occupancies:
            return None
        k = int(round((t - self.entry_time) / self.h))
        if 0 <= k < len(self.occupancies):
            return self.occupancies[k]
        return None


def snap_to_grid(t: float, h: float, offset_steps: int = 0) -> float:
    """Nearest multiple of h, optionally moved by a whole number of steps"""
    return (round(t / h) + offset_steps) * h


# =============================================================================
# TSS generation and conversion
# =============================================================================

def _distance_profile(v0: float, cap: float, a: float, tau: np.ndarray) -> np.ndarray:
    t_acc = max(0.0, (cap - v0) / a)
    s_acc = v0 * t_acc + 0.5 * a * t_acc * t_acc
    return np.where(tau <= t_acc,
                    v0 * tau + 0.5 * a * tau * tau,
                    s_acc + cap * (tau - t_acc))


def _time_to_cover(v0: float, cap: float, a: float, distance: float) -> float:
    t_acc = max(0.0, (cap - v0) / a)
    s_acc = v0 * t_acc + 0.5 * a * t_acc * t_acc
    if distance <= s_acc:
        return (-v0 + math.sqrt(v0 * v0 + 2.0 * a * distance)) / a
    return t_acc + (distance - s_acc) / cap


def generate_tss(spec: VehicleSpec, route: Route, entry_time: float, entry_speed: float,
                 speed_cap: float, h: float, lateral_accel: float = 2.5) -> TSS:
    """
    Fastest feasible TSS for crossing a route

    The vehicle accelerates at a_max from entry_speed toward
    min(speed_cap, turn speed of the route) and then holds that speed until
    its rear bumper has passed the end of the route.

    Args:
        spec: Vehicle specification
        route: Crossing route
        entry_time: Time the front bumper reaches the entrance line (on the h grid)
        entry_speed: Speed at the entrance line
        speed_cap: Upper speed bound requested by the caller
        h: Sampling period
        lateral_accel: Lateral acceleration cap for turn speeds

    Returns:
        TSS sampled every h

    Raises:
        MotionError: For empty routes, speeds outside [0, cap] or an off-grid entry time
    """
    if route is None or route.total_length <= 0:
        raise MotionError("Cannot generate a TSS on an empty route")
    if h <= 0:
        raise MotionError(f"Invalid step h: {h}")
    cap = min(speed_cap, spec.v_max, route.turn_speed(lateral_accel))
    if speed_cap > spec.v_max + 1e-9:
        raise MotionError(f"Speed cap {speed_cap} exceeds v_max {spec.v_max}")
    if not -1e-9 <= entry_speed <= cap + 1e-9:
        raise MotionError(f"Invalid entry speed: {entry_speed}. Must be in [0, {cap:.3f}]")
    if cap <= 0:
        raise MotionError(f"Invalid speed cap: {cap}")
    k0 = round(entry_time / h)
    if abs(k0 * h - entry_time) > _TIME_TOL:
        raise MotionError(f"Entry time {entry_time} is not a multiple of h={h}")
    entry_speed = min(max(entry_speed, 0.0), cap)

    target = route.total_length + spec.length
    duration = _time_to_cover(entry_speed, cap, spec.a_max, target)
    n = int(math.ceil(duration / h - 1e-9)) + 1
    tau = np.arange(n) * h
    s = _distance_profile(entry_speed, cap, spec.a_max, tau)
    x, y, th = route.poses_at(s - spec.length / 2.0)
    states = tuple(
        TimedState((k0 + k) * h, Pose(float(x[k]), float(y[k]), float(th[k])), float(s[k]))
        for k in range(n)
    )
    return TSS(route=route.id, states=states, h=h, entry_speed=entry_speed)


def tss_to_dtot(tss: TSS, spec: VehicleSpec) -> DTOT:
    """One occupancy per state, a vehicle-sized rectangle centered at the state's pose"""
    occs = tuple(
        Occupancy(st.t, OrientedRect(st.pose, spec.length, spec.width), k, st.s)
        for k, st in enumerate(tss.states)
    )
    return DTOT(vin=spec.vin, route=tss.route, occupancies=occs, spec=spec, h=tss.h,
                entry_speed=tss.entry_speed)


def dtot_to_tss(dtot: DTOT) -> TSS:
    """
    Inverse of tss_to_dtot

    Raises:
        MotionError: If the DTOT has no occupancies
    """
    if not dtot.occupancies:
        raise MotionError(f"DTOT of vehicle {dtot.vin} has no occupancies")
    states = tuple(TimedState(o.t, o.rect.center, o.s) for o in dtot.occupancies)
    return TSS(route=dtot.route, states=states, h=dtot.h, entry_speed=dtot.entry_speed)


# =============================================================================
# Occupancy time intervals
# =============================================================================

def exact_oti(dtot: DTOT, k: int, stats=None) -> TimeInterval:
    """
    Occupancy time interval by scanning neighbours

    The entrance time is the time of the closest earlier occupancy that does
    not overlap occupancy k (the first occupancy's time if every earlier one
    overlaps); the exit time is found symmetrically.
    """
    occs = dtot.occupancies
    if not 0 <= k < len(occs):
        raise IndexError(f"Occupancy index {k} out of range for vehicle {dtot.vin}")
    target = occs[k].rect
    lo = occs[0].t
    for i in range(k - 1, -1, -1):
        if stats is not None:
            stats.comparisons += 1
        if not rects_overlap(occs[i].rect, target):
            lo = occs[i].t
            break
    hi = occs[-1].t
    for i in range(k + 1, len(occs)):
        if stats is not None:
            stats.comparisons += 1
        if not rects_overlap(occs[i].rect, target):
            hi = occs[i].t
            break
    if stats is not None:
        stats.oti_evaluations += 1
    return TimeInterval(lo, hi)


def finite_difference_kinematics(s_prev: Optional[float], s_k: float, s_next: Optional[float],
                                 h: float) -> Tuple[float, float, float, float]:
    """
    Backward/forward speeds, their mean and the implied acceleration

    Missing neighbours fall back to the one-sided value.

    Returns:
        (v_minus, v_plus, v_k, a_k)
    """
    v_minus = None if s_prev is None else (s_k - s_prev) / h
    v_plus = None if s_next is None else (s_next - s_k) / h
    if v_minus is None and v_plus is None:
        raise MotionError("At least one neighbour is needed")
    if v_minus is None:
        v_minus = v_plus
    if v_plus is None:
        v_plus = v_minus
    return v_minus, v_plus, 0.5 * (v_minus + v_plus), (v_plus - v_minus) / h


def sagitta(radius: float, chord: float) -> float:
    """Arc height over a chord; the radius itself when the chord does not fit"""
    half = chord / 2.0
    if radius <= half:
        return radius
    return radius - math.sqrt(radius * radius - half * half)


def curvature_allowance(dtot: DTOT, k: int, speed: float) -> float:
    """Extra travel distance for occupancies on curved parts of the path"""
    occs = dtot.occupancies
    n = len(occs)
    length = dtot.spec.length
    allowance = 0.0
    # local curvature from the direct neighbours
    i0, i1 = max(0, k - 1), min(n - 1, k + 1)
    for a, b in ((i0, i1), (max(0, k - _span(length, speed, dtot.h)),
                            min(n - 1, k + _span(length, speed, dtot.h)))):
        arc = occs[b].s - occs[a].s
        turn = abs(normalize_angle(occs[b].rect.center.theta - occs[a].rect.center.theta))
        if turn > 1e-6 and arc > 0:
            allowance = max(allowance, sagitta(arc / turn, length))
    return allowance


def _span(length: float, speed: float, h: float) -> int:
    return int(math.ceil(length / max(speed * h, 1e-3)))


def _traversal_time(v: float, a: float, distance: float) -> Optional[float]:
    """Smallest positive tau with v*tau + a*tau^2/2 = distance, None if never reached"""
    if abs(a) < 1e-12:
        return distance / v
    disc = v * v + 2.0 * a * distance
    if disc < 0:
        return None
    return (-v + math.sqrt(disc)) / a


def estimated_oti(dtot: DTOT, k: int, stats=None) -> TimeInterval:
    """
    Occupancy time interval estimated from local speed and acceleration

    Speed and acceleration come from finite differences with the direct
    neighbours; the vehicle is then assumed to move with constant acceleration
    (clamped to the vehicle limits) over its length plus a curvature
    allowance. The result is widened by one step on each side and clamped to
    the DTOT's time span.

    Each bound is then certified against occupancy k: while the occupancy at
    the bound still overlaps it, the bound moves one step outward. Every
    occupancy strictly between the exact bounds overlaps occupancy k, so the
    certified interval always contains the one exact_oti returns. These
    checks count as comparisons.
    """
    occs = dtot.occupancies
    n = len(occs)
    if not 0 <= k < n:
        raise IndexError(f"Occupancy index {k} out of range for vehicle {dtot.vin}")
    if stats is not None:
        stats.oti_evaluations += 1
    t_k = occs[k].t
    if n == 1:
        return TimeInterval(t_k, t_k)
    first, last = occs[0].t, occs[-1].t
    s_prev = occs[k - 1].s if k > 0 else None
    s_next = occs[k + 1].s if k < n - 1 else None
    _, _, v, a = finite_difference_kinematics(s_prev, occs[k].s, s_next, dtot.h)
    if v < MIN_ESTIMATION_SPEED:
        return TimeInterval(first, last)
    a = min(max(a, -dtot.spec.a_min), dtot.spec.a_max)
    distance = dtot.spec.length + curvature_allowance(dtot, k, v)

    ahead = _traversal_time(v, a, distance)
    behind = _traversal_time(v, -a, distance)
    hi = last if ahead is None else min(last, t_k + ahead + dtot.h)
    lo = first if behind is None else max(first, t_k - behind - dtot.h)
    return _certified(dtot, k, lo, hi, stats)


def _certified(dtot: DTOT, k: int, lo: float, hi: float, stats=None) -> TimeInterval:
    """Push estimated bounds outward until they sit on occupancies clear of occupancy k"""
    occs = dtot.occupancies
    n = len(occs)
    target = occs[k].rect
    first = occs[0].t

    def overlaps(i):
        if stats is not None:
            stats.comparisons += 1
        return rects_overlap(occs[i].rect, target)

    i = min(int(math.floor((lo - first) / dtot.h + 1e-9)), k - 1)
    while i > 0 and overlaps(i):
        i -= 1
    j = max(int(math.ceil((hi - first) / dtot.h - 1e-9)), k + 1)
    while j < n - 1 and overlaps(j):
        j += 1
    return TimeInterval(occs[max(i, 0)].t, occs[min(j, n - 1)].t)
