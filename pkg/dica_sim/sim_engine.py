"""
Discrete-time intersection world

Vehicles are spawned at the edge of the communication region, follow their
lane leader with a constant-time-headway controller, and the head vehicle of
each lane exchanges REQUEST/RESPONSE messages with the intersection
controller (a DICA coordinator or a fixed-cycle traffic light). Confirmed
vehicles plan their approach so that they reach the entrance line exactly at
the confirmed entry time and then play back the confirmed TSS.

Positions on the approach are front-bumper distances `d` to the entrance line.
"""
import logging
import math
import multiprocessing as mp
import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ScenarioConfig
from .coordinator import Coordinator, MessageTrace, Request, find_space_time_conflicts
from .geometry import OrientedRect, rects_overlap
from .layout import (
    Approach, ConflictZoneTable, IntersectionLayout, Movement, Route,
    build_layout, compute_conflict_zones, route_id,
)
from .metrics import MetricsCollector, MetricsReport, average_reports, summarize_stats
from .motion import TSS, MotionError, VehicleSpec, generate_tss
from .traffic_light import SignalController, SignalPlan, demand_from_volume, optimize_plan


logger = logging.getLogger(__name__)

# Approach controller: standstill gap (m) and time headway (s)
STANDSTILL_GAP = 2.0
TIME_HEADWAY = 1.0
# Gains on gap error (1/s^2) and relative speed (1/s)
K_GAP = 0.23
K_SPEED = 0.07
# Free-road acceleration exponent
FREE_EXPONENT = 4

# A vehicle closer than this to the line and slower than this is stopped there
STOP_TOLERANCE = 0.1

_PLAN_TOL = 1e-6


class SafetyViolationError(RuntimeError):
    """Raised when two vehicles overlap inside the intersection region"""
    pass


class LivenessError(RuntimeError):
    """Raised when a run exceeds its simulated-time guard"""
    pass


class VehiclePhase(Enum):
    OUTSIDE = 0
    APPROACHING = 1
    HEAD = 2
    CONFIRMED = 3
    CROSSING = 4
    EXITED = 5


# Allowed transitions
_TRANSITIONS = {
    VehiclePhase.OUTSIDE: {VehiclePhase.APPROACHING},
    VehiclePhase.APPROACHING: {VehiclePhase.HEAD},
    VehiclePhase.HEAD: {VehiclePhase.CONFIRMED},
    VehiclePhase.CONFIRMED: {VehiclePhase.CROSSING},
    VehiclePhase.CROSSING: {VehiclePhase.EXITED},
    VehiclePhase.EXITED: set(),
}


@dataclass
class SpawnModel:
    """
    Bernoulli vehicle generation with seeded, independent random streams

    One stream per road, one for route draws and one for initial speeds, all
    split from a single seed so that changing one road's draws leaves the
    others untouched.
    """
    p_left: float = 0.2
    p_straight: float = 0.6
    p_right: float = 0.2
    speed_range: Tuple[float, float] = (0.4, 1.0)
    seed: int = 0

    def __post_init__(self):
        total = self.p_left + self.p_straight + self.p_right
        if abs(total - 1.0) > 1e-9 or min(self.p_left, self.p_straight, self.p_right) < 0:
            raise ValueError(f"Invalid route probabilities: sum {total}")
        streams = np.random.SeedSequence(self.seed).spawn(6)
        self._roads = [np.random.default_rng(s) for s in streams[:4]]
        self._routes = np.random.default_rng(streams[4])
        self._speeds = np.random.default_rng(streams[5])

    @classmethod
    def from_config(cls, config: ScenarioConfig, seed: int) -> 'SpawnModel':
        sp = config.spawn
        return cls(sp.p_left, sp.p_straight, sp.p_right, tuple(sp.initial_speed_range), seed)

    def trial(self, approach: Approach, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Invalid spawn probability: {p}")
        return bool(self._roads[approach.value].random() < p)

    def draw_movement(self) -> Movement:
        idx = self._routes.choice(3, p=[self.p_left, self.p_straight, self.p_right])
        return (Movement.LEFT, Movement.STRAIGHT, Movement.RIGHT)[int(idx)]

    def draw_speed(self, v_max: float) -> float:
        lo, hi = self.speed_range
        return float(self._speeds.uniform(lo, hi)) * v_max


@dataclass
class VehicleAgent:
    spec: VehicleSpec
    route: Route
    lane: str
    major: bool
    spawn_time: float
    desired_speed: float
    phase: VehiclePhase = VehiclePhase.OUTSIDE
    d: float = 0.0
    v: float = 0.0
    comm_entry_time: Optional[float] = None
    tss: Optional[TSS] = None
    plan: Optional[Tuple[np.ndarray, np.ndarray]] = None
    plan_step: int = 0
    confirmed_at: Optional[float] = None
    hold: bool = False
    index: int = 0

    @property
    def vin(self) -> int:
        return self.spec.vin

    @property
    def s(self) -> float:
        """Front-bumper progress past the entrance line while crossing"""
        return self.tss.states[self.index].s

    @property
    def rear_distance(self) -> float:
        """Distance from the entrance line back to the rear bumper (negative once past)"""
        if self.phase is VehiclePhase.CROSSING:
            return self.spec.length - self.s
        return self.d + self.spec.length

    @property
    def speed(self) -> float:
        if self.phase is not VehiclePhase.CROSSING:
            return self.v
        k = max(self.index, 1)
        states = self.tss.states
        return (states[k].s - states[k - 1].s) / self.tss.h

    def rect(self) -> OrientedRect:
        return OrientedRect(self.tss.states[self.index].pose, self.spec.length, self.spec.width)


# =============================================================================
# Approach kinematics
# =============================================================================

def safe_speed(gap: float, leader_speed: float, decel: float, h: float) -> float:
    """
    Largest speed for the next step after which the vehicle can still stop
    within `gap`, given a leader braking at the same rate
    """
    radicand = decel * decel * h * h + 2.0 * decel * gap + leader_speed * leader_speed
    return max(0.0, -decel * h + math.sqrt(max(radicand, 0.0)))


def follow_acceleration(v: float, v_max: float, a_max: float,
                        gap: Optional[float] = None, leader_speed: float = 0.0) -> float:
    """Constant-time-headway law toward the leader, free-road term otherwise"""
    accel = a_max * (1.0 - (v / v_max) ** FREE_EXPONENT)
    if gap is not None:
        desired = STANDSTILL_GAP + TIME_HEADWAY * v
        accel = min(accel, K_GAP * (gap - desired) + K_SPEED * (leader_speed - v))
    return accel


def earliest_arrival(d: float, v: float, spec: VehicleSpec, cap: float) -> Optional[Tuple[float, float]]:
    """
    Shortest time to the entrance line and the speed there

    The vehicle accelerates at a_max toward a peak speed and brakes at a_min
    to the entry speed, which is the route speed cap when reachable.

    Returns:
        (duration, entry_speed), or None if the vehicle cannot slow to the cap
    """
    a, b = spec.a_max, spec.a_min
    v_e = min(cap, math.sqrt(v * v + 2.0 * a * d))
    if v * v - 2.0 * b * d > v_e * v_e + 1e-9:
        return None
    if d <= 0:
        return 0.0, v_e
    peak = math.sqrt((d + v * v / (2 * a) + v_e * v_e / (2 * b)) / (1 / (2 * a) + 1 / (2 * b)))
    peak = max(peak, v, v_e)
    if peak <= spec.v_max:
        return (peak - v) / a + (peak - v_e) / b, v_e
    vm = spec.v_max
    d_acc = (vm * vm - v * v) / (2 * a)
    d_dec = (vm * vm - v_e * v_e) / (2 * b)
    return (vm - v) / a + (vm - v_e) / b + (d - d_acc - d_dec) / vm, v_e


def _phase_times(v: float, u: float, v_e: float, a: float, b: float) -> Tuple[float, float]:
    t1 = (u - v) / a if u >= v else (v - u) / b
    t3 = (u - v_e) / b if u >= v_e else (v_e - u) / a
    return t1, t3


def _profile(v: float, u: float, v_e: float, duration: float, a: float, b: float,
             tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distance and speed of the ramp / cruise at u / ramp profile at times tau"""
    t1, t3 = _phase_times(v, u, v_e, a, b)
    a1 = a if u >= v else -b
    a3 = -b if u >= v_e else a
    tc = max(duration - t1 - t3, 0.0)
    tau1 = np.minimum(tau, t1)
    tau2 = np.clip(tau - t1, 0.0, tc)
    tau3 = np.clip(tau - t1 - tc, 0.0, t3)
    x = v * tau1 + 0.5 * a1 * tau1 ** 2 + u * tau2 + u * tau3 + 0.5 * a3 * tau3 ** 2
    speed = np.where(tau < t1, v + a1 * tau,
                     np.where(tau <= t1 + tc, u, u + a3 * (tau - t1 - tc)))
    return x, np.maximum(speed, 0.0)


def _bisect(f: Callable[[float], float], lo: float, hi: float, iterations: int = 60) -> float:
    """Root of an increasing function on [lo, hi]"""
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _shortest_cover(d: float, v: float, duration: float, v_e: float, a: float, b: float) -> float:
    """Distance of the slowest profile lasting `duration` and ending at v_e"""
    def span(u):
        t1, t3 = _phase_times(v, u, v_e, a, b)
        return t1 + t3 - duration

    u = 0.0 if span(0.0) <= 0 else _bisect(lambda x: -span(x), 0.0, v)
    return float(_profile(v, u, v_e, duration, a, b, np.array([duration]))[0][0])


def entry_speed_for(d: float, v: float, duration: float, cap: float,
                    spec: VehicleSpec) -> Optional[float]:
    """
    Highest entry speed up to cap that a profile of exactly `duration` can end with

    The speed suits this duration only: a coordinator delay may push the
    slowest profile ending at it past d. delay_tolerant_entry_speed gives a
    speed that any later arrival can still end with.

    Returns:
        The entry speed, or None if even arriving at rest covers more than d
    """
    a, b = spec.a_max, spec.a_min
    if _shortest_cover(d, v, duration, cap, a, b) <= d:
        return cap
    if _shortest_cover(d, v, duration, 0.0, a, b) > d + _PLAN_TOL:
        return None
    return _bisect(lambda u: _shortest_cover(d, v, duration, u, a, b) - d, 0.0, cap)


def delay_tolerant_entry_speed(d: float, v: float, cap: float, spec: VehicleSpec,
                               margin: float = 1e-3) -> Optional[float]:
    """
    Highest entry speed up to cap that every late enough arrival can end with

    The slowest profile toward a fixed entry speed covers more distance the
    longer it lasts, up to braking to a stop and pulling away again:
    v^2 / (2 a_min) + v_e^2 / (2 a_max). Keeping that within d (less a small
    margin) makes any arrival no earlier than earliest_arrival plannable.

    Returns:
        The entry speed, or None if the vehicle can no longer stop before the line
    """
    stop = v * v / (2.0 * spec.a_min)
    if stop > d:
        return None
    return min(cap, math.sqrt(2.0 * spec.a_max * max(d - stop - margin, 0.0)))


def plan_arrival(d: float, v: float, duration: float, v_e: float, spec: VehicleSpec,
                 h: float) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Approach profile reaching the entrance line after exactly `duration`

    The profile ramps from v to a cruise speed u, holds u (possibly zero,
    i.e. waiting at the line), and ramps to the entry speed v_e. The cruise
    speed is found by bisection so that the covered distance equals d.

    Returns:
        (distances, speeds) at each of the round(duration / h) following
        steps, or None if no such profile exists within the vehicle limits
    """
    a, b = spec.a_max, spec.a_min
    n = int(round(duration / h))
    if n < 1:
        return None

    def span(u):
        t1, t3 = _phase_times(v, u, v_e, a, b)
        return t1 + t3 - duration

    def covered(u):
        return float(_profile(v, u, v_e, duration, a, b, np.array([duration]))[0][0])

    if span(v) > _PLAN_TOL:
        return None
    u_lo = 0.0 if span(0.0) <= 0 else _bisect(lambda u: -span(u), 0.0, v)
    u_hi = spec.v_max if span(spec.v_max) <= 0 else _bisect(span, v, spec.v_max)
    if covered(u_lo) > d + _PLAN_TOL or covered(u_hi) < d - _PLAN_TOL:
        return None
    u = _bisect(lambda x: covered(x) - d, u_lo, u_hi)

    tau = np.arange(1, n + 1) * h
    x, speed = _profile(v, u, v_e, duration, a, b, tau)
    distances = np.maximum(d - x, 0.0)
    distances[-1] = 0.0
    speed[-1] = v_e
    return distances, speed


# =============================================================================
# The world
# =============================================================================

def build_environment(config: ScenarioConfig) -> Tuple[IntersectionLayout, ConflictZoneTable]:
    """Layout and conflict zone table for a scenario"""
    lc, vc = config.layout, config.vehicle
    layout = build_layout(lane_width=lc.lane_width, comm_distance=lc.comm_distance,
                          v_max=vc.v_max, a_min=vc.a_min,
                          left_turn_radius=lc.left_turn_radius,
                          right_turn_radius=lc.right_turn_radius,
                          lateral_accel=lc.lateral_accel)
    zones = compute_conflict_zones(layout, vc.length, vc.width, buffer=config.zone_buffer,
                                   step=lc.zone_step)
    return layout, zones


def signal_plan_for(config: ScenarioConfig, zones: Optional[ConflictZoneTable] = None,
                    volume: Optional[int] = None) -> SignalPlan:
    """Optimized fixed-cycle plan for the scenario's demand"""
    sp, sig = config.spawn, config.signal
    cfg = config if volume is None else config.replace(volume=volume, volume_schedule=[])
    demand = demand_from_volume(cfg.spawn_probability(0.0), sp.spawn_period,
                                sp.p_left, sp.p_straight, sp.p_right,
                                unbalanced=config.unbalanced, minor_factor=sp.minor_factor)
    return optimize_plan(demand, sig.saturation_flow / 3600.0,
                         lost_time_per_phase=sig.lost_time_per_phase, yellow=sig.yellow,
                         zones=zones, scheme=sig.phase_scheme)


class World:
    """
    One simulated intersection driven step by step

    Args:
        config: Validated scenario
        seed: Random seed of this run
        layout, zones: Shared geometry (built from the config when omitted)
        techniques: Override of the coordinator techniques (benchmarks)
    """

    def __init__(self, config: ScenarioConfig, seed: int,
                 layout: Optional[IntersectionLayout] = None,
                 zones: Optional[ConflictZoneTable] = None,
                 techniques: Optional[Sequence[str]] = None):
        config.validate()
        self.config = config
        self.seed = seed
        self.h = config.h
        if layout is None or zones is None:
            layout, zones = build_environment(config)
        self.layout = layout
        self.zones = zones
        self.spawn_model = SpawnModel.from_config(config, seed)
        self.trace = MessageTrace() if config.trace else None
        self.plan: Optional[SignalPlan] = None

        if config.mode == 'tlight':
            self.plan = signal_plan_for(config, zones)
            self.controller = SignalController(layout, zones, self.plan, h=self.h,
                                               follow_margin=config.coordinator.follow_margin,
                                               trace=self.trace)
        else:
            selected = config.techniques if techniques is None else techniques
            self.controller = Coordinator(layout, zones, techniques=selected, h=self.h,
                                          follow_margin=config.coordinator.follow_margin,
                                          trace=self.trace)

        self.metrics = MetricsCollector()
        self.k = 0
        self.generated = 0
        self.exited = 0
        self.held = 0
        self._next_vin = 0
        self._spawn_every = max(1, int(round(config.spawn.spawn_period / self.h)))
        self._sample_every = max(1, int(round(1.0 / self.h)))
        self.outside: Dict[str, List[VehicleAgent]] = {lane: [] for lane in layout.lanes}
        self.lanes: Dict[str, List[VehicleAgent]] = {lane: [] for lane in layout.lanes}
        self.last_entered: Dict[str, VehicleAgent] = {}
        self.crossing: List[VehicleAgent] = []

    @property
    def t(self) -> float:
        return self.k * self.h

    @property
    def waiting(self) -> int:
        """Vehicles generated that have not entered the intersection yet"""
        return self.generated - len(self.crossing) - self.exited

    @property
    def spawning(self) -> bool:
        if self.config.vehicle_target is not None:
            return self.generated < self.config.vehicle_target
        return self.t <= self.config.duration

    @property
    def finished(self) -> bool:
        if self.config.vehicle_target is not None:
            return not self.spawning and self.exited == self.generated
        return self.t >= self.config.duration - 1e-9

    def _set_phase(self, agent: VehicleAgent, phase: VehiclePhase):
        if phase not in _TRANSITIONS[agent.phase]:
            raise RuntimeError(f"Vehicle {agent.vin}: illegal transition "
                               f"{agent.phase.name} -> {phase.name}")
        agent.phase = phase
        if self.trace is not None:
            self.trace.record('PHASE', self.t, agent.vin, phase=phase.name)

    # -------------------------------------------------------------------------
    # Step stages
    # -------------------------------------------------------------------------

    def step(self):
        """Advance the world by one sampling period"""
        self.k += 1
        if self.k % self._spawn_every == 0 and self.spawning:
            self._spawn()
        self._admit()
        self._move()
        self._finalize_exits()
        self._dispatch_requests()
        self._check_safety()
        if self.k % self._sample_every == 0:
            self.metrics.sample_intersection_distances([a.rect() for a in self.crossing], self.t)
            self.metrics.record_series(self.t, self.generated, self.exited, self.waiting)

    def _spawn(self):
        cfg = self.config
        p_major = cfg.spawn_probability(self.t)
        for approach in Approach:
            if not self.spawning:
                break
            p = p_major if approach.is_major or not cfg.unbalanced else p_major * cfg.spawn.minor_factor
            if not self.spawn_model.trial(approach, p):
                continue
            movement = self.spawn_model.draw_movement()
            route = self.layout.route(route_id(approach, movement))
            vc = cfg.vehicle
            spec = VehicleSpec(self._next_vin, vc.length, vc.width, vc.a_max, vc.a_min, vc.v_max)
            agent = VehicleAgent(spec=spec, route=route, lane=route.entry_lane,
                                 major=approach.is_major, spawn_time=self.t,
                                 desired_speed=self.spawn_model.draw_speed(vc.v_max))
            self._next_vin += 1
            self.generated += 1
            self.outside[agent.lane].append(agent)
            if self.trace is not None:
                self.trace.record('SPAWN', self.t, agent.vin, route=route.id)

    def _admit(self):
        """Move the first queued vehicle of each lane into the communication region"""
        comm = self.layout.comm_distance
        for lane, queue in self.outside.items():
            if not queue:
                continue
            agent = queue[0]
            leader = self._lane_leader(lane, len(self.lanes[lane]))
            v = agent.desired_speed
            if leader is not None:
                gap = comm - leader.rear_distance
                if gap < STANDSTILL_GAP:
                    continue
                v = min(v, (gap - STANDSTILL_GAP) / TIME_HEADWAY,
                        safe_speed(gap - STANDSTILL_GAP, leader.speed, agent.spec.a_min, self.h))
            queue.pop(0)
            agent.d = comm
            agent.v = v
            agent.comm_entry_time = self.t
            self._set_phase(agent, VehiclePhase.APPROACHING)
            self.lanes[lane].append(agent)

    def _lane_leader(self, lane: str, position: int) -> Optional[VehicleAgent]:
        if position > 0:
            return self.lanes[lane][position - 1]
        leader = self.last_entered.get(lane)
        if leader is not None and leader.phase is VehiclePhase.CROSSING and leader.rear_distance > 0:
            return leader
        return None

    def _approach_update(self, agent: VehicleAgent, leader: Optional[VehicleAgent]) -> Tuple[float, float]:
        spec = agent.spec
        gap, v_lead = None, 0.0
        if leader is not None:
            gap = agent.d - leader.rear_distance
            v_lead = leader.speed
        accel = follow_acceleration(agent.v, spec.v_max, spec.a_max, gap, v_lead)
        accel = min(max(accel, -spec.a_min), spec.a_max)
        v = min(agent.v + accel * self.h, spec.v_max)
        if gap is not None:
            v = min(v, safe_speed(gap - STANDSTILL_GAP, v_lead, spec.a_min, self.h))
        v = min(v, safe_speed(agent.d, 0.0, spec.a_min, self.h))
        v = max(v, 0.0)
        d = max(agent.d - v * self.h, 0.0)
        if d < STOP_TOLERANCE and v < STOP_TOLERANCE:
            d, v = 0.0, 0.0
        return d, v

    def _move(self):
        for agent in self.crossing:
            agent.index = min(agent.index + 1, len(agent.tss.states) - 1)

        updates = []
        for lane, agents in self.lanes.items():
            for pos, agent in enumerate(agents):
                if agent.phase is VehiclePhase.CONFIRMED:
                    ds, vs = agent.plan
                    k = self.k - agent.plan_step - 1
                    updates.append((agent, float(ds[k]), float(vs[k])))
                else:
                    updates.append((agent, *self._approach_update(agent, self._lane_leader(lane, pos))))
        for agent, d, v in updates:
            agent.d, agent.v = d, v

        for lane, agents in self.lanes.items():
            while agents and agents[0].phase is VehiclePhase.CONFIRMED and \
                    self.k - agents[0].plan_step >= len(agents[0].plan[0]):
                agent = agents.pop(0)
                self._enter(agent)

    def _enter(self, agent: VehicleAgent):
        self._set_phase(agent, VehiclePhase.CROSSING)
        agent.index = 0
        agent.d = 0.0
        agent.plan = None
        self.crossing.append(agent)
        self.last_entered[agent.lane] = agent
        self.metrics.record_wait(agent.confirmed_at - agent.comm_entry_time)

    def _finalize_exits(self):
        remaining = []
        for agent in self.crossing:
            if agent.index >= len(agent.tss.states) - 1:
                self._set_phase(agent, VehiclePhase.EXITED)
                self.metrics.record_trip(agent.vin, agent.comm_entry_time, agent.tss.exit_time,
                                         agent.major)
                self.exited += 1
                if self.last_entered.get(agent.lane) is agent:
                    del self.last_entered[agent.lane]
                if self.trace is not None:
                    self.trace.record('EXIT', self.t, agent.vin)
            else:
                remaining.append(agent)
        self.crossing = remaining

    def _dispatch_requests(self):
        heads = []
        for lane, agents in self.lanes.items():
            if not agents:
                self.controller.set_head(lane, None)
                continue
            head = agents[0]
            if head.phase is VehiclePhase.APPROACHING:
                self._set_phase(head, VehiclePhase.HEAD)
                self.controller.set_head(lane, head.vin)
            if head.phase is VehiclePhase.HEAD:
                if head.hold and head.d == 0.0 and head.v == 0.0:
                    head.hold = False
                if not head.hold:
                    heads.append(head)

        for head in sorted(heads, key=lambda a: (a.comm_entry_time, a.vin)):
            self._request(head)

    def _entry_time(self, duration: float) -> float:
        """First grid time no earlier than the next step and the earliest arrival"""
        return max(self.k + 1, int(math.ceil((self.t + duration) / self.h - 1e-9))) * self.h

    def _request(self, agent: VehicleAgent):
        spec, route, t = agent.spec, agent.route, self.t
        cap = min(spec.v_max, route.turn_speed(self.layout.lateral_accel))
        arrival = earliest_arrival(agent.d, agent.v, spec, cap)
        if arrival is None:
            return
        duration, v_e = arrival
        entry_time = self._entry_time(duration)
        v_e = entry_speed_for(agent.d, agent.v, entry_time - t, v_e, spec)
        if v_e is None or self._confirm(agent, entry_time, v_e) is not False:
            return

        # delayed past what the approach can absorb at that entry speed
        v_safe = delay_tolerant_entry_speed(agent.d, agent.v, cap, spec)
        arrival = None if v_safe is None else earliest_arrival(agent.d, agent.v, spec, v_safe)
        if arrival is not None:
            duration, v_e = arrival
            if self._confirm(agent, self._entry_time(duration), v_e) is not False:
                return
        agent.hold = True
        self.held += 1
        logger.info("t=%.2f: vehicle %s cannot meet its confirmed entry time, stopping to re-request",
                    t, agent.vin)

    def _confirm(self, agent: VehicleAgent, entry_time: float, v_e: float) -> Optional[bool]:
        """
        Request entry at entry_time with speed v_e and plan the approach to it

        Returns:
            True once confirmed, None if the controller declined or no TSS could
            be built, False if the confirmed entry could not be planned (the
            confirmation is then cancelled)
        """
        spec, route, t = agent.spec, agent.route, self.t
        if isinstance(self.controller, SignalController) and \
                not self.controller.is_green(route.id, entry_time):
            return None
        try:
            tss = generate_tss(spec, route, entry_time, v_e, spec.v_max, self.h,
                               self.layout.lateral_accel)
        except MotionError as e:
            logger.warning("Vehicle %s could not build a TSS: %s", agent.vin, e)
            return None

        response = self.controller.process_request(Request(spec, tss, agent.lane), now=t)
        if response is None:
            return None
        confirmed = response.tss
        plan = plan_arrival(agent.d, agent.v, confirmed.entry_time - t, confirmed.entry_speed,
                            spec, self.h)
        if plan is None:
            self.controller.cancel(agent.vin)
            logger.debug("t=%.2f: vehicle %s cannot reach the line at %.2f with %.2f m/s",
                         t, agent.vin, confirmed.entry_time, confirmed.entry_speed)
            return False
        agent.tss = confirmed
        agent.plan = plan
        agent.plan_step = self.k
        agent.confirmed_at = t
        self._set_phase(agent, VehiclePhase.CONFIRMED)
        return True

    def _check_safety(self):
        for i in range(len(self.crossing)):
            a = self.crossing[i]
            ra = a.rect()
            for b in self.crossing[i + 1:]:
                if rects_overlap(ra, b.rect()):
                    raise SafetyViolationError(
                        f"Vehicles {a.vin} ({a.route.id}) and {b.vin} ({b.route.id}) "
                        f"overlap at t={self.t:.2f}")

    # -------------------------------------------------------------------------
    # Running
    # -------------------------------------------------------------------------

    def run(self, verify: bool = False) -> MetricsReport:
        """
        Step until the run ends and compute its report

        Raises:
            LivenessError: If the simulated time exceeds max_sim_time
        """
        cfg = self.config
        logger.info("Run start: mode=%s volume=%s seed=%s", cfg.mode, cfg.volume, self.seed)
        while not self.finished:
            if self.t > cfg.max_sim_time:
                raise LivenessError(
                    f"Run exceeded {cfg.max_sim_time} s with {self.waiting} vehicles waiting")
            self.step()

        conflicts = None
        if verify:
            conflicts = len(find_space_time_conflicts(list(self.controller.history.values())))
            if conflicts:
                logger.error("Verification found %d space-time conflicts", conflicts)
        report = self.metrics.finalize(
            self.generated, mode=cfg.mode,
            volume=cfg.volume, seed=self.seed, unbalanced=cfg.unbalanced,
            coordinator=summarize_stats(self.controller.stats_log),
            signal_plan=self.plan.to_dict() if self.plan is not None else None,
            conflicts=conflicts, sim_time=self.t,
        )
        logger.info("Run end: t=%.1f s, %d generated, %d crossed, avg trip %.2f s",
                    self.t, report.generated, report.crossed, report.avg_trip_time)
        return report


def run_scenario(config: ScenarioConfig, verify: bool = False,
                 trace_dir: Optional[str] = None,
                 environment: Optional[Tuple[IntersectionLayout, ConflictZoneTable]] = None) -> MetricsReport:
    """
    Run a scenario once per seed and average the results

    Raises:
        ConfigError: If the configuration is invalid
    """
    config.validate()
    if config.trace and not trace_dir:
        logger.warning("Tracing is on but no trace directory was given; traces are not written")
    layout, zones = environment or build_environment(config)
    reports = []
    for seed in config.seeds:
        world = World(config, seed, layout, zones)
        reports.append(world.run(verify=verify))
        if world.trace is not None and trace_dir:
            os.makedirs(trace_dir, exist_ok=True)
            world.trace.write(os.path.join(trace_dir, f"trace_{config.mode}_{seed}.jsonl"))
    return average_reports(reports)


def _run_one(args) -> MetricsReport:
    config, verify = args
    return run_scenario(config, verify=verify)


def run_scenarios(configs: Sequence[ScenarioConfig], jobs: int = 1,
                  verify: bool = False) -> List[MetricsReport]:
    """Run independent scenarios, in worker processes when jobs > 1"""
    tasks = [(c, verify) for c in configs]
    if jobs > 1 and len(tasks) > 1:
        logger.info("Running %d scenarios with %d workers", len(tasks), jobs)
        with mp.get_context('spawn').Pool(processes=jobs) as pool:
            return pool.map(_run_one, tasks)
    return [_run_one(t) for t in tasks]
