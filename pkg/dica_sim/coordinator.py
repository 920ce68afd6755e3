"""
Intersection control agent

The coordinator receives REQUESTs (vehicle spec + proposed TSS) from head
vehicles, resolves space-time conflicts against the set of already confirmed
vehicles by delaying the requester, and answers with the confirmed TSS.

Conflict search comes in two forms: the baseline scan over every occupancy
pair of every confirmed vehicle, and the enhanced search that can combine
four techniques:

    A  skip confirmed vehicles with compatible routes or disjoint crossing times
    B  only look at occupancies inside precomputed conflict zones
    C  estimate occupancy time intervals in constant time
    D  locate time-compatible occupancies by bisection (needs B)
"""
import bisect
import json
import logging
import math
import time
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .geometry import TimeInterval, corners_array, intervals_overlap, rects_overlap, rects_overlap_matrix
from .layout import ConflictZoneTable, IntersectionLayout, route_compatible
from .motion import (
    DTOT, TSS, MotionError, VehicleSpec,
    dtot_to_tss, estimated_oti, exact_oti, generate_tss, tss_to_dtot,
)


logger = logging.getLogger(__name__)

OtiFunction = Callable[..., TimeInterval]


class RequestRejectedError(Exception):
    """Raised for requests the coordinator refuses to process"""
    pass


class CoordinationError(RuntimeError):
    """Raised if conflict resolution fails to converge"""
    pass


class Technique(str, Enum):
    A = 'A'
    B = 'B'
    C = 'C'
    D = 'D'


def as_technique(value) -> Technique:
    """Technique for a member or a name such as 'b' or 'IV-B'"""
    if isinstance(value, Technique):
        return value
    return Technique(str(value).strip().upper().replace('IV-', ''))


def validate_techniques(techniques: Iterable) -> frozenset:
    """
    Normalize a technique selection

    Raises:
        ValueError: For unknown techniques or D without B
    """
    techniques = list(techniques)
    try:
        selected = frozenset(as_technique(t) for t in techniques)
    except ValueError as e:
        raise ValueError(f"Invalid technique selection {techniques}: {e}") from None
    if Technique.D in selected and Technique.B not in selected:
        raise ValueError("Technique D (bisection) requires technique B (conflict zones)")
    return selected


def technique_label(techniques: Iterable) -> str:
    selected = sorted(t.value for t in validate_techniques(techniques))
    return '+'.join(selected) if selected else 'baseline'


# =============================================================================
# Records
# =============================================================================

@dataclass
class ConfirmedEntry:
    vin: int
    dtot: DTOT
    route: str
    exit_lane: str
    crossing_interval: TimeInterval


class ConfirmedSet:
    """Ordered ledger of confirmed DTOTs"""

    def __init__(self):
        self._entries: Dict[int, ConfirmedEntry] = {}

    def add(self, entry: ConfirmedEntry):
        self._entries[entry.vin] = entry

    def remove(self, vin: int) -> Optional[ConfirmedEntry]:
        return self._entries.pop(vin, None)

    def get(self, vin: int) -> ConfirmedEntry:
        return self._entries[vin]

    def prune(self, now: float) -> List[int]:
        """Drop entries whose vehicles have fully exited before `now`"""
        gone = [vin for vin, e in self._entries.items() if e.dtot.exit_time < now]
        for vin in gone:
            del self._entries[vin]
        return gone

    def __len__(self):
        return len(self._entries)

    def __iter__(self) -> Iterator[ConfirmedEntry]:
        return iter(list(self._entries.values()))

    def __contains__(self, vin) -> bool:
        return vin in self._entries


@dataclass(frozen=True)
class ConflictCandidate:
    vin: int
    first_time_at_collision: float
    blocker_index: int
    requester_index: int


@dataclass
class CoordinatorStats:
    """Work counters for one request"""
    vin: int = -1
    comparisons: int = 0
    oti_evaluations: int = 0
    loop_iterations: int = 0
    bisection_steps: int = 0
    wall_time: float = 0.0
    confirmed_size: int = 0
    filtered_size: int = 0
    occupancies: int = 0
    window_occupancies: int = 0
    delay: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ComplexityModel:
    """Bound on the number of occupancies of the fastest crossing"""
    h: float
    v_max: float
    a_max: float
    max_route_length: float

    @property
    def long_route(self) -> bool:
        """True when v_max is reached before the end of the longest route"""
        return self.max_route_length >= self.v_max ** 2 / (2.0 * self.a_max)

    @property
    def n_bar(self) -> float:
        L, v, a, h = self.max_route_length, self.v_max, self.a_max, self.h
        if self.long_route:
            return (2.0 * a * L + v * v) / (2.0 * a * v * h)
        return math.sqrt(2.0 * L / a) / h


def complexity_bound(model: ComplexityModel, n: int, alpha: float = 1.0) -> Tuple[float, float]:
    """
    Analytic operation-count envelopes for one request

    Returns:
        (baseline_ops, enhanced_ops) = (n^2 N^3, alpha n^2 N log2 N)
    """
    if n <= 0:
        return 0.0, 0.0
    N = model.n_bar
    log_n = math.log2(N) if N > 1 else 0.0
    return float(n * n * N ** 3), float(alpha * n * n * N * log_n)


@dataclass
class Request:
    spec: VehicleSpec
    tss: TSS
    lane: str

    @property
    def vin(self) -> int:
        return self.spec.vin


@dataclass
class Response:
    vin: int
    tss: TSS
    delay: float
    speed_capped: bool = False


class MessageTrace:
    """In-memory message log, written as JSON lines on demand"""

    def __init__(self):
        self.records: List[dict] = []

    def record(self, direction: str, t: float, vin: Optional[int] = None, **payload):
        rec = {'dir': direction, 't': round(t, 6), 'vin': vin}
        rec.update(payload)
        self.records.append(rec)

    def write(self, path: str):
        with open(path, 'w') as f:
            for rec in self.records:
                f.write(json.dumps(rec, sort_keys=True) + '\n')


# =============================================================================
# Conflict search
# =============================================================================

def _count_bisect(stats: Optional[CoordinatorStats], size: int):
    if stats is not None:
        steps = max(1, int(size).bit_length())
        stats.bisection_steps += steps
        stats.comparisons += steps


def get_cv(confirmed: Iterable[ConfirmedEntry], dtot: DTOT,
           stats: Optional[CoordinatorStats] = None,
           oti: OtiFunction = exact_oti) -> List[ConflictCandidate]:
    """
    Baseline conflict search

    Every occupancy of every confirmed vehicle is compared with every
    occupancy of the requester; a pair conflicts when the rectangles overlap
    and their occupancy time intervals overlap.

    Returns:
        Conflicting vehicles sorted by the entrance time of their earliest
        conflicting occupancy
    """
    found = []
    for entry in confirmed:
        if entry.vin == dtot.vin:
            continue
        hit = _scan_pairs(entry.dtot, dtot, range(len(entry.dtot)), lambda j: range(len(dtot)),
                          oti, stats)
        if hit is not None:
            found.append(ConflictCandidate(entry.vin, *hit))
    return sorted(found, key=lambda c: c.first_time_at_collision)


def _recheck(blocker: DTOT, j: int, requester: DTOT, i: int, ib: TimeInterval,
             exact: Optional[OtiFunction], stats) -> Optional[TimeInterval]:
    """Blocker interval of a candidate pair, or None if exact intervals are disjoint"""
    if exact is None:
        return ib
    ib = exact(blocker, j, stats)
    return ib if intervals_overlap(ib, exact(requester, i, stats)) else None


def _scan_pairs(blocker: DTOT, requester: DTOT, b_range, r_range_for, oti, stats,
                exact: Optional[OtiFunction] = None):
    b_occs, r_occs = blocker.occupancies, requester.occupancies
    for j in b_range:
        bo = b_occs[j]
        for i in r_range_for(j):
            if stats is not None:
                stats.comparisons += 1
            if rects_overlap(bo.rect, r_occs[i].rect):
                ib = oti(blocker, j, stats)
                ir = oti(requester, i, stats)
                if intervals_overlap(ib, ir):
                    ib = _recheck(blocker, j, requester, i, ib, exact, stats)
                    if ib is not None:
                        return ib.lo, j, i
    return None


def _index_range(centers: np.ndarray, window: Optional[Tuple[float, float]],
                 stats: Optional[CoordinatorStats] = None) -> range:
    if window is None:
        return range(0)
    lo = bisect.bisect_left(centers, window[0])
    hi = bisect.bisect_right(centers, window[1])
    _count_bisect(stats, len(centers))
    _count_bisect(stats, len(centers))
    return range(lo, hi)


def filter_confirmed(confirmed: Iterable[ConfirmedEntry], dtot: DTOT,
                     zones: Optional[ConflictZoneTable], h: float) -> List[ConfirmedEntry]:
    """Confirmed vehicles on incompatible routes whose crossing intervals meet the requester's"""
    span = TimeInterval(dtot.entry_time, dtot.exit_time)
    selected = []
    for entry in confirmed:
        if entry.vin == dtot.vin:
            continue
        if zones is not None and route_compatible(zones, entry.route, dtot.route):
            continue
        if intervals_overlap(entry.crossing_interval.padded(2.0 * h), span):
            selected.append(entry)
    return selected


class _RequesterIntervals:
    """Requester OTIs inside the conflict windows plus monotone envelopes for bisection"""

    def __init__(self, dtot: DTOT, index_range: range, oti, stats):
        self.start = index_range.start
        self.lo = [0.0] * len(index_range)
        self.hi = [0.0] * len(index_range)
        for n, i in enumerate(index_range):
            iv = oti(dtot, i, stats)
            self.lo[n], self.hi[n] = iv.lo, iv.hi
        # running max of upper bounds and running min (from the right) of lower bounds
        self.prefix_hi = list(np.maximum.accumulate(self.hi)) if self.hi else []
        self.suffix_lo = list(np.minimum.accumulate(self.lo[::-1])[::-1]) if self.lo else []

    def interval(self, i: int) -> TimeInterval:
        return TimeInterval(self.lo[i - self.start], self.hi[i - self.start])

    def time_range(self, iv: TimeInterval, stats) -> range:
        """Superset of indices whose interval can overlap iv"""
        first = bisect.bisect_left(self.prefix_hi, iv.lo)
        last = bisect.bisect_right(self.suffix_lo, iv.hi)
        _count_bisect(stats, len(self.prefix_hi))
        _count_bisect(stats, len(self.suffix_lo))
        return range(self.start + first, self.start + last)


def enhanced_get_cv(confirmed: Iterable[ConfirmedEntry], dtot: DTOT,
                    zones: Optional[ConflictZoneTable],
                    techniques: Iterable = tuple(Technique),
                    stats: Optional[CoordinatorStats] = None) -> List[ConflictCandidate]:
    """
    Conflict search with any combination of the improvement techniques

    Detects the same conflicting vehicles as get_cv; techniques only reduce
    the work. Estimated intervals always contain the exact ones, so with
    technique C they prune candidate pairs and every remaining candidate is
    confirmed with exact intervals.
    """
    techniques = validate_techniques(techniques)
    use_zones = Technique.B in techniques
    if use_zones and zones is None:
        raise ValueError("Conflict zone technique requires a conflict zone table")
    oti = estimated_oti if Technique.C in techniques else exact_oti
    exact = exact_oti if oti is not exact_oti else None
    h = dtot.h

    entries = list(confirmed)
    if stats is not None:
        stats.confirmed_size = len(entries)
        stats.occupancies = len(dtot)
    if Technique.A in techniques:
        entries = filter_confirmed(entries, dtot, zones, h)
    else:
        entries = [e for e in entries if e.vin != dtot.vin]
    if stats is not None:
        stats.filtered_size = len(entries)

    # requester occupancy ranges per blocker route
    r_windows: Dict[str, range] = {}
    if use_zones:
        for entry in entries:
            if entry.route not in r_windows:
                r_windows[entry.route] = _index_range(
                    dtot.s_centers, zones.window(dtot.route, entry.route), stats)
    if stats is not None:
        covered = set()
        for rng in r_windows.values():
            covered.update(rng)
        stats.window_occupancies = len(covered) if use_zones else len(dtot)

    intervals = None
    if Technique.D in techniques and r_windows:
        spans = [r for r in r_windows.values() if len(r)]
        if spans:
            union = range(min(r.start for r in spans), max(r.stop for r in spans))
            intervals = _RequesterIntervals(dtot, union, oti, stats)

    found = []
    for entry in entries:
        blocker = entry.dtot
        if use_zones:
            r_range = r_windows[entry.route]
            b_range = _index_range(blocker.s_centers, zones.window(entry.route, dtot.route), stats)
            if not len(r_range) or not len(b_range):
                continue
        else:
            r_range = range(len(dtot))
            b_range = range(len(blocker))

        if intervals is not None:
            hit = _bisect_scan(blocker, dtot, b_range, r_range, zones, intervals, oti, stats, exact)
        else:
            hit = _scan_pairs(blocker, dtot, b_range, lambda j: r_range, oti, stats, exact)
        if hit is not None:
            found.append(ConflictCandidate(entry.vin, *hit))
    return sorted(found, key=lambda c: c.first_time_at_collision)


def _bisect_scan(blocker: DTOT, requester: DTOT, b_range: range, r_range: range,
                 zones: ConflictZoneTable, intervals: _RequesterIntervals, oti, stats,
                 exact: Optional[OtiFunction] = None):
    b_occs, r_occs = blocker.occupancies, requester.occupancies
    centers = requester.s_centers
    for j in b_range:
        bo = b_occs[j]
        space = zones.space_window(blocker.route, requester.route, bo.s_center)
        if space is None:
            continue
        s_range = _index_range(centers, space, stats)
        ib = oti(blocker, j, stats)
        t_range = intervals.time_range(ib, stats)
        lo = max(s_range.start, t_range.start, r_range.start)
        hi = min(s_range.stop, t_range.stop, r_range.stop)
        for i in range(lo, hi):
            if stats is not None:
                stats.comparisons += 1
            if rects_overlap(bo.rect, r_occs[i].rect) and intervals_overlap(ib, intervals.interval(i)):
                hit = _recheck(blocker, j, requester, i, ib, exact, stats)
                if hit is not None:
                    return hit.lo, j, i
    return None


def update_dtot(requester: DTOT, blocker: DTOT, conflict: ConflictCandidate,
                oti: OtiFunction = exact_oti, zones: Optional[ConflictZoneTable] = None,
                stats: Optional[CoordinatorStats] = None) -> DTOT:
    """
    Delay the requester past the blocker

    The shift is the largest tau_ub(blocker occupancy) - tau_lb(requester
    occupancy) + h over the space-overlapping occupancy pairs, rounded up to
    whole steps, so one update clears the blocker. Geometry is unchanged.
    """
    h = requester.h
    b_occs, r_occs = blocker.occupancies, requester.occupancies
    delta = -math.inf
    if zones is not None:
        b_range = _index_range(blocker.s_centers, zones.window(blocker.route, requester.route))
        pairs = ((j, _index_range(requester.s_centers,
                                  zones.space_window(blocker.route, requester.route,
                                                     b_occs[j].s_center)))
                 for j in b_range)
    else:
        pairs = ((j, range(len(r_occs))) for j in range(len(b_occs)))

    b_cache: Dict[int, TimeInterval] = {}
    r_cache: Dict[int, TimeInterval] = {}
    for j, r_range in pairs:
        for i in r_range:
            if stats is not None:
                stats.comparisons += 1
            if not rects_overlap(b_occs[j].rect, r_occs[i].rect):
                continue
            if j not in b_cache:
                b_cache[j] = oti(blocker, j, stats)
            if i not in r_cache:
                r_cache[i] = oti(requester, i, stats)
            delta = max(delta, b_cache[j].hi - r_cache[i].lo + h)

    if not math.isfinite(delta):
        # conflict pair reported by the search is always space-overlapping
        ib = oti(blocker, conflict.blocker_index, stats)
        ir = oti(requester, conflict.requester_index, stats)
        delta = ib.hi - ir.lo + h
    steps = max(1, int(math.ceil(delta / h - 1e-9)))
    return requester.shifted(steps)


def check_fv(confirmed: Iterable[ConfirmedEntry], dtot: DTOT, layout: IntersectionLayout,
             margin: float = 2.0) -> DTOT:
    """
    Account for front vehicles heading to the same exit lane

    The requester's speed is capped at the exit speed of the last confirmed
    vehicle bound for the same exit lane. A requester on the very same route
    is additionally delayed until, at every common time step, the two
    occupancies stay apart when both are grown by margin/2 at each end.
    """
    route = layout.route(dtot.route)
    spec = dtot.spec
    same_exit = [e for e in confirmed if e.exit_lane == route.exit_lane and e.vin != dtot.vin]
    if not same_exit:
        return dtot

    front = max(same_exit, key=lambda e: e.dtot.exit_time)
    cap = min(front.dtot.exit_speed, spec.v_max)
    if dtot.exit_speed > cap + 1e-9 and cap > 0:
        tss = generate_tss(spec, route, dtot.entry_time, min(dtot.entry_speed, cap), cap,
                           dtot.h, layout.lateral_accel)
        dtot = tss_to_dtot(tss, spec)

    leaders = [e.dtot for e in same_exit if e.route == dtot.route]
    steps = 0
    while any(not _gap_holds(dtot.shifted(steps) if steps else dtot, lead, margin)
              for lead in leaders):
        steps += 1
    return dtot.shifted(steps) if steps else dtot


def _gap_holds(follower: DTOT, leader: DTOT, margin: float) -> bool:
    start = max(follower.entry_time, leader.entry_time)
    end = min(follower.exit_time, leader.exit_time)
    if start > end + 1e-9:
        return True
    k = int(round((start - follower.entry_time) / follower.h))
    while k < len(follower.occupancies) and follower.occupancies[k].t <= end + 1e-9:
        occ = follower.occupancies[k]
        lead = leader.occupancy_at_time(occ.t)
        if lead is not None and rects_overlap(occ.rect.inflated(along=margin / 2.0),
                                              lead.rect.inflated(along=margin / 2.0)):
            return False
        k += 1
    return True


def exact_intervals(dtot: DTOT) -> Tuple[np.ndarray, np.ndarray]:
    """Exact OTI bounds of every occupancy of a DTOT"""
    lo = np.empty(len(dtot))
    hi = np.empty(len(dtot))
    for k in range(len(dtot)):
        iv = exact_oti(dtot, k)
        lo[k], hi[k] = iv.lo, iv.hi
    return lo, hi


def find_space_time_conflicts(dtots: List[DTOT]) -> List[Tuple[int, int, int, int]]:
    """
    Brute-force pairwise conflict check over a collection of DTOTs

    Returns:
        (vin_a, vin_b, index_a, index_b) for every occupancy pair that overlaps
        in space and whose exact time intervals overlap
    """

    prepared = []
    for d in dtots:
        if not len(d):
            continue
        x = np.array([o.rect.center.x for o in d.occupancies])
        y = np.array([o.rect.center.y for o in d.occupancies])
        th = np.array([o.rect.center.theta for o in d.occupancies])
        prepared.append((d, corners_array(x, y, th, d.spec.length, d.spec.width), th,
                         exact_intervals(d)))

    conflicts = []
    for a in range(len(prepared)):
        da, ca, tha, (lo_a, hi_a) = prepared[a]
        for b in range(a + 1, len(prepared)):
            db, cb, thb, (lo_b, hi_b) = prepared[b]
            if da.exit_time < db.entry_time or db.exit_time < da.entry_time:
                continue
            space = rects_overlap_matrix(ca, tha, cb, thb)
            timing = (np.maximum(lo_a[:, None], lo_b[None, :])
                      <= np.minimum(hi_a[:, None], hi_b[None, :]))
            for i, j in zip(*np.nonzero(space & timing)):
                conflicts.append((da.vin, db.vin, int(i), int(j)))
    return conflicts


# =============================================================================
# The coordinator
# =============================================================================

class IntersectionController:
    """
    Request bookkeeping shared by every intersection controller

    Tracks the head vehicle of each lane, the set of confirmed DTOTs and the
    confirmed DTOT of every vehicle seen so far.

    Args:
        layout: Intersection layout
        zones: Conflict zone table
        h: Sampling period shared by all vehicles
        follow_margin: Gap kept between vehicles on the same route (m)
        trace: Optional message trace
    """

    def __init__(self, layout: IntersectionLayout, zones: Optional[ConflictZoneTable] = None,
                 h: float = 0.05, follow_margin: float = 2.0,
                 trace: Optional[MessageTrace] = None):
        self.layout = layout
        self.zones = zones
        self.h = h
        self.follow_margin = follow_margin
        self.trace = trace
        self.confirmed = ConfirmedSet()
        self.history: Dict[int, DTOT] = {}
        self.stats_log: List[CoordinatorStats] = []
        self._heads: Dict[str, int] = {}

    def set_head(self, lane: str, vin: Optional[int]):
        """Register the vehicle allowed to send requests from a lane"""
        if vin is None:
            self._heads.pop(lane, None)
        else:
            self._heads[lane] = vin

    def cancel(self, vin: int):
        """Withdraw a confirmation (the vehicle will request again)"""
        self.confirmed.remove(vin)
        self.history.pop(vin, None)

    def _accept(self, request: Request, now: Optional[float]):
        """
        Check a REQUEST and record it in the trace

        Returns:
            The requested route

        Raises:
            RequestRejectedError: For non-head requesters or malformed TSS
        """
        spec, tss = request.spec, request.tss
        if self._heads.get(request.lane) != spec.vin:
            raise RequestRejectedError(f"Vehicle {spec.vin} is not the head of lane {request.lane}")
        try:
            route = self.layout.route(tss.route)
            tss.validate(spec, route)
        except (MotionError, KeyError) as e:
            raise RequestRejectedError(f"Malformed TSS from vehicle {spec.vin}: {e}") from e
        if route.entry_lane != request.lane:
            raise RequestRejectedError(f"Route {route.id} does not start on lane {request.lane}")
        self._record('REQUEST', now, tss.entry_time, spec.vin, route=tss.route,
                     entry_time=round(tss.entry_time, 6), states=len(tss.states))
        return route

    def _commit(self, vin: int, route, dtot: DTOT):
        self.confirmed.add(ConfirmedEntry(
            vin=vin, dtot=dtot, route=route.id, exit_lane=route.exit_lane,
            crossing_interval=TimeInterval(dtot.entry_time, dtot.exit_time)))
        self.history[vin] = dtot

    def _record(self, direction: str, now: Optional[float], fallback: float, vin: int, **payload):
        if self.trace is not None:
            self.trace.record(direction, now if now is not None else fallback, vin, **payload)


class Coordinator(IntersectionController):
    """
    Intersection control agent processing one request at a time

    Args:
        layout: Intersection layout
        zones: Conflict zone table (required for techniques A, B and D)
        techniques: Improvement techniques; empty selects the baseline search
        h: Sampling period shared by all vehicles
        follow_margin: Gap kept between vehicles on the same route (m)
        trace: Optional message trace
    """

    def __init__(self, layout: IntersectionLayout, zones: Optional[ConflictZoneTable] = None,
                 techniques: Iterable = (), h: float = 0.05, follow_margin: float = 2.0,
                 trace: Optional[MessageTrace] = None):
        super().__init__(layout, zones, h, follow_margin, trace)
        self.techniques = validate_techniques(techniques)
        if self.techniques & {Technique.A, Technique.B} and zones is None:
            raise ValueError("Route filtering and conflict zone techniques require a conflict zone table")

    @property
    def label(self) -> str:
        return technique_label(self.techniques)

    @property
    def oti(self) -> OtiFunction:
        return estimated_oti if Technique.C in self.techniques else exact_oti

    def find_conflicts(self, dtot: DTOT, stats: Optional[CoordinatorStats] = None):
        if not self.techniques:
            return get_cv(self.confirmed, dtot, stats, oti=exact_oti)
        return enhanced_get_cv(self.confirmed, dtot, self.zones, self.techniques, stats)

    def process_request(self, request: Request, now: Optional[float] = None) -> Response:
        """
        Confirm a conflict-free TSS for the requesting head vehicle

        Args:
            request: REQUEST message
            now: Current time; confirmed vehicles that exited before it are pruned

        Returns:
            RESPONSE carrying the confirmed TSS

        Raises:
            RequestRejectedError: For non-head requesters or malformed TSS
        """
        started = time.perf_counter()
        spec, tss = request.spec, request.tss
        route = self._accept(request, now)

        if now is not None:
            self.confirmed.prune(now)
        stats = CoordinatorStats(vin=spec.vin, confirmed_size=len(self.confirmed),
                                 occupancies=len(tss.states))
        original = tss_to_dtot(tss, spec)
        dtot = check_fv(self.confirmed, original, self.layout, self.follow_margin)
        capped = dtot.exit_speed < original.exit_speed - 1e-9

        use_zones = Technique.B in self.techniques
        conflicts = self.find_conflicts(dtot, stats)
        while conflicts:
            stats.loop_iterations += 1
            if stats.loop_iterations > len(self.confirmed):
                raise CoordinationError(
                    f"Conflict resolution for vehicle {spec.vin} did not converge")
            blocker = self.confirmed.get(conflicts[0].vin).dtot
            dtot = update_dtot(dtot, blocker, conflicts[0], oti=self.oti,
                               zones=self.zones if use_zones else None, stats=stats)
            conflicts = self.find_conflicts(dtot, stats)

        self._commit(spec.vin, route, dtot)
        delay = dtot.entry_time - tss.entry_time
        stats.delay = delay
        stats.wall_time = time.perf_counter() - started
        self.stats_log.append(stats)
        logger.debug("Confirmed vehicle %s on %s: delay %.2f s, %d iterations",
                     spec.vin, route.id, delay, stats.loop_iterations)
        self._record('RESPONSE', now, tss.entry_time, spec.vin,
                     entry_time=round(dtot.entry_time, 6), delay=round(delay, 6), capped=capped)
        return Response(vin=spec.vin, tss=dtot_to_tss(dtot), delay=delay, speed_capped=capped)
