"""
Fixed-cycle traffic light baseline

The cycle length follows the exponential model C0 = 1.5 L exp(1.8 Y), with
green split in proportion to the critical flow ratio of each phase. The
SignalController speaks the same request/response protocol as the
coordinator, but only releases vehicles that can enter on green without
being delayed.
"""
import logging
import math
import time
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .coordinator import (
    CoordinatorStats, IntersectionController, MessageTrace, Request, Response, Technique,
    check_fv, enhanced_get_cv,
)
from .layout import Approach, ConflictZoneTable, IntersectionLayout, Movement, route_compatible, route_id
from .motion import dtot_to_tss, tss_to_dtot


logger = logging.getLogger(__name__)


class OversaturationError(ValueError):
    """Raised when the critical flow ratios sum to one or more"""
    pass


class SignalState(Enum):
    GREEN = 'green'
    YELLOW = 'yellow'
    RED = 'red'


@dataclass(frozen=True)
class Phase:
    movements: Tuple[str, ...]
    green: float
    yellow: float
    effective_green: float
    flow_ratio: float

    @property
    def duration(self) -> float:
        return self.green + self.yellow


@dataclass(frozen=True)
class SignalPlan:
    cycle_length: float
    phases: Tuple[Phase, ...]
    lost_time: float
    flow_ratio_sum: float
    scheme: str = 'protected_left'

    def phase_bounds(self) -> List[Tuple[float, float]]:
        """(start, end) of each phase within one cycle"""
        bounds, start = [], 0.0
        for phase in self.phases:
            bounds.append((start, start + phase.duration))
            start += phase.duration
        return bounds

    def to_dict(self) -> dict:
        return asdict(self)


def phase_groups(scheme: str = 'protected_left') -> List[List[str]]:
    """
    Movement groups of the four phases

    'split' runs every movement of one approach per phase; 'protected_left'
    pairs opposing through/right movements and opposing left turns.
    """
    if scheme == 'split':
        return [[route_id(a, m) for m in Movement] for a in Approach]
    if scheme == 'protected_left':
        groups = []
        for pair in ((Approach.SOUTH, Approach.NORTH), (Approach.EAST, Approach.WEST)):
            groups.append([route_id(a, m) for a in pair for m in (Movement.STRAIGHT, Movement.RIGHT)])
            groups.append([route_id(a, Movement.LEFT) for a in pair])
        return groups
    raise ValueError(f"Invalid phase scheme: {scheme}. Must be 'split' or 'protected_left'")


def cycle_length(flow_ratio_sum: float, lost_time: float) -> float:
    return 1.5 * lost_time * math.exp(1.8 * flow_ratio_sum)


def optimize_plan(demand: Dict[str, float], saturation_flow: float,
                  groups: Optional[Sequence[Sequence[str]]] = None,
                  lost_time_per_phase: float = 4.0, yellow: float = 3.0,
                  zones: Optional[ConflictZoneTable] = None,
                  scheme: str = 'protected_left') -> SignalPlan:
    """
    Optimize a fixed-cycle signal plan

    Args:
        demand: Flow rate per movement (route id -> veh/s)
        saturation_flow: Saturation flow per lane (veh/s)
        groups: Movement groups per phase (default from `scheme`)
        lost_time_per_phase: Lost time of each phase (s)
        yellow: Yellow time of each phase (s)
        zones: If given, every phase is checked for route compatibility
        scheme: Phase scheme used when `groups` is None

    Returns:
        SignalPlan

    Raises:
        OversaturationError: If Y >= 1
        ValueError: For negative demand or phases holding conflicting movements
    """
    if saturation_flow <= 0:
        raise ValueError(f"Invalid saturation flow: {saturation_flow}")
    if any(q < 0 for q in demand.values()):
        raise ValueError("Demand must be non-negative")
    groups = [list(g) for g in (groups or phase_groups(scheme))]
    if zones is not None:
        for group in groups:
            for i, a in enumerate(group):
                for b in group[i + 1:]:
                    if not route_compatible(zones, a, b):
                        raise ValueError(f"Phase movements {a} and {b} conflict in this layout")

    ratios = [max((demand.get(m, 0.0) / saturation_flow for m in g), default=0.0) for g in groups]
    Y = sum(ratios)
    if Y >= 1.0:
        logger.error("Signal demand is oversaturated: Y = %.3f", Y)
        raise OversaturationError(f"Intersection is oversaturated: Y = {Y:.3f} >= 1")

    lost = lost_time_per_phase * len(groups)
    C0 = cycle_length(Y, lost)
    phases = []
    for group, y in zip(groups, ratios):
        g = (y / Y) * (C0 - lost) if Y > 0 else (C0 - lost) / len(groups)
        phases.append(Phase(movements=tuple(group), green=g + lost_time_per_phase - yellow,
                            yellow=yellow, effective_green=g, flow_ratio=y))
    return SignalPlan(cycle_length=C0, phases=tuple(phases), lost_time=lost,
                      flow_ratio_sum=Y, scheme=scheme)


def uniform_delay(plan: SignalPlan, phase: Phase) -> float:
    """Average uniform delay of the critical movement of a phase (s/veh)"""
    C = plan.cycle_length
    lam = phase.effective_green / C
    x = min(phase.flow_ratio / lam, 0.999) if lam > 0 else 0.999
    return C * (1.0 - lam) ** 2 / (2.0 * (1.0 - lam * x))


def signal_state(plan: SignalPlan, t: float) -> Dict[str, SignalState]:
    """
    Per-movement signal indication at time t

    Exactly one phase is green or yellow at any instant; the pattern repeats
    every cycle.
    """
    tau = math.fmod(t, plan.cycle_length)
    if tau < 0:
        tau += plan.cycle_length
    states: Dict[str, SignalState] = {}
    active = None
    for (start, end), phase in zip(plan.phase_bounds(), plan.phases):
        for m in phase.movements:
            states[m] = SignalState.RED
        if active is None and start <= tau < end:
            active = (phase, tau - start)
    if active is None:
        active = (plan.phases[-1], plan.phases[-1].duration)
    phase, into = active
    indication = SignalState.GREEN if into < phase.green else SignalState.YELLOW
    for m in phase.movements:
        states[m] = indication
    return states


def demand_from_volume(spawn_probability: float, spawn_period: float,
                       p_left: float, p_straight: float, p_right: float,
                       unbalanced: bool = False, minor_factor: float = 0.3) -> Dict[str, float]:
    """Expected flow per movement (veh/s) produced by the spawn model"""
    shares = {Movement.LEFT: p_left, Movement.STRAIGHT: p_straight, Movement.RIGHT: p_right}
    demand = {}
    for approach in Approach:
        rate = spawn_probability / spawn_period
        if unbalanced and not approach.is_major:
            rate *= minor_factor
        for movement, share in shares.items():
            demand[route_id(approach, movement)] = rate * share
    return demand


class SignalController(IntersectionController):
    """
    Request handler for the signalized intersection

    A request is granted only if the movement is green when the vehicle
    reaches the entrance line and the vehicle can cross without any delay.
    Otherwise it is declined and the vehicle keeps approaching the stop line.
    """
    label = 'tlight'

    def __init__(self, layout: IntersectionLayout, zones: ConflictZoneTable, plan: SignalPlan,
                 h: float = 0.05, follow_margin: float = 2.0,
                 trace: Optional[MessageTrace] = None):
        super().__init__(layout, zones, h, follow_margin, trace)
        self.plan = plan

    def is_green(self, route: str, t: float) -> bool:
        return signal_state(self.plan, t).get(route) is SignalState.GREEN

    def process_request(self, request: Request, now: Optional[float] = None) -> Optional[Response]:
        """Grant the proposed TSS unchanged (speed cap aside) or decline with None"""
        started = time.perf_counter()
        spec, tss = request.spec, request.tss
        route = self._accept(request, now)
        if not self.is_green(route.id, tss.entry_time):
            return None

        if now is not None:
            self.confirmed.prune(now)
        stats = CoordinatorStats(vin=spec.vin, confirmed_size=len(self.confirmed),
                                 occupancies=len(tss.states))
        dtot = tss_to_dtot(tss, spec)
        adjusted = check_fv(self.confirmed, dtot, self.layout, self.follow_margin)
        if adjusted.entry_time > dtot.entry_time + 1e-9:
            return None
        if enhanced_get_cv(self.confirmed, adjusted, self.zones, tuple(Technique), stats):
            return None

        self._commit(spec.vin, route, adjusted)
        stats.wall_time = time.perf_counter() - started
        self.stats_log.append(stats)
        capped = adjusted.exit_speed < dtot.exit_speed - 1e-9
        self._record('RESPONSE', now, tss.entry_time, spec.vin,
                     entry_time=round(adjusted.entry_time, 6), delay=0.0, capped=capped)
        return Response(vin=spec.vin, tss=dtot_to_tss(adjusted), delay=0.0, speed_capped=capped)
