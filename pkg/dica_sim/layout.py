"""
Intersection layout

A four-way intersection of two-way roads with three incoming lanes (the
leftmost dedicated to left turns) and two outgoing lanes per road, driven on
the right. Routes are built in the frame of the south approach (vehicles
heading +y) and rotated by quarter turns for the other approaches.

The module also precomputes, for every ordered pair of routes, the arc-length
windows within which the two routes can geometrically conflict.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import V_MAX
from .geometry import Pose, corners_array, rects_overlap_matrix


logger = logging.getLogger(__name__)


class LayoutError(ValueError):
    """Raised when the requested geometry is infeasible"""
    pass


class UnknownRouteError(KeyError):
    """Raised for route ids that are not part of the layout"""
    pass


class Approach(Enum):
    """Road a vehicle arrives from; the value counts CCW quarter turns from SOUTH"""
    SOUTH = 0
    EAST = 1
    NORTH = 2
    WEST = 3

    @property
    def is_major(self) -> bool:
        return self in (Approach.SOUTH, Approach.NORTH)


class Movement(Enum):
    LEFT = 'left'
    STRAIGHT = 'straight'
    RIGHT = 'right'


# Incoming lane index (0 = leftmost) and outgoing lane index (0 = inner) per movement
_ENTRY_INDEX = {Movement.LEFT: 0, Movement.STRAIGHT: 1, Movement.RIGHT: 2}
_EXIT_INDEX = {Movement.LEFT: 0, Movement.STRAIGHT: 1, Movement.RIGHT: 1}
# Quarter turns from the approach road to the exit road
_EXIT_OFFSET = {Movement.LEFT: 3, Movement.STRAIGHT: 2, Movement.RIGHT: 1}

# Fewest centerline samples per route
MIN_ROUTE_SAMPLES = 200


def route_id(approach: Approach, movement: Movement) -> str:
    return f"{approach.name[0]}-{movement.value}"


def stopping_distance(v_max: float, a_min: float) -> float:
    """Distance needed to brake from v_max to rest at a_min"""
    return v_max * v_max / (2.0 * a_min)


class Route:
    """
    Arc-length parameterized centerline of one crossing route

    Poses beyond either end are extrapolated along the end tangents, which
    covers vehicle centers that are still on the approach or already on the
    exit lane.
    """

    def __init__(self, id: str, approach: Approach, movement: Movement,
                 xs: np.ndarray, ys: np.ndarray, thetas: np.ndarray,
                 radius: Optional[float] = None):
        if len(xs) < 2:
            raise LayoutError(f"Route {id} needs at least two samples")
        self.id = id
        self.approach = approach
        self.movement = movement
        self.radius = radius
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.thetas = np.unwrap(np.asarray(thetas, dtype=float))
        steps = np.hypot(np.diff(self.xs), np.diff(self.ys))
        if np.any(steps <= 0):
            raise LayoutError(f"Route {id} arc length must be strictly increasing")
        self.s = np.concatenate([[0.0], np.cumsum(steps)])
        self.total_length = float(self.s[-1])

    @property
    def entry_lane(self) -> str:
        return f"{self.approach.name}-in{_ENTRY_INDEX[self.movement]}"

    @property
    def exit_road(self) -> Approach:
        return Approach((self.approach.value + _EXIT_OFFSET[self.movement]) % 4)

    @property
    def exit_lane(self) -> str:
        return f"{self.exit_road.name}-out{_EXIT_INDEX[self.movement]}"

    def turn_speed(self, lateral_accel: float) -> float:
        """Speed cap v = sqrt(a_lat * r) on turning routes; inf when straight"""
        if self.radius is None:
            return math.inf
        return math.sqrt(lateral_accel * self.radius)

    def poses_at(self, s) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized pose lookup returning (x, y, theta) arrays"""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        x = np.interp(s, self.s, self.xs)
        y = np.interp(s, self.s, self.ys)
        th = np.interp(s, self.s, self.thetas)
        before = s < 0
        if np.any(before):
            d = s[before]
            x[before] = self.xs[0] + d * math.cos(self.thetas[0])
            y[before] = self.ys[0] + d * math.sin(self.thetas[0])
        after = s > self.total_length
        if np.any(after):
            d = s[after] - self.total_length
            x[after] = self.xs[-1] + d * math.cos(self.thetas[-1])
            y[after] = self.ys[-1] + d * math.sin(self.thetas[-1])
        return x, y, th

    def pose_at(self, s: float) -> Pose:
        x, y, th = self.poses_at(s)
        return Pose(float(x[0]), float(y[0]), float(th[0]))

    def __repr__(self):
        return f"<Route {self.id}: {self.total_length:.2f} m -> {self.exit_lane}>"


# =============================================================================
# Route construction
# =============================================================================

def _line(p0, p1, spacing):
    n = max(2, int(math.ceil(math.hypot(p1[0] - p0[0], p1[1] - p0[1]) / spacing)) + 1)
    f = np.linspace(0.0, 1.0, n)
    heading = math.atan2(p1[1] - p0[1], p1[0] - p0[0])
    return p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1]), np.full(n, heading)


def _arc(center, r, phi0, phi1, spacing):
    n = max(2, int(math.ceil(abs(phi1 - phi0) * r / spacing)) + 1)
    phi = np.linspace(phi0, phi1, n)
    direction = 1.0 if phi1 > phi0 else -1.0
    return (center[0] + r * np.cos(phi), center[1] + r * np.sin(phi),
            phi + direction * math.pi / 2.0)


def _join(segments):
    xs, ys, ths = [], [], []
    for x, y, th in segments:
        if len(x) == 0:
            continue
        start = 1 if xs else 0
        xs.append(x[start:])
        ys.append(y[start:])
        ths.append(th[start:])
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ths)


def _local_route(movement: Movement, w: float, half: float, radius: Optional[float],
                 spacing: float):
    """Centerline of a south-approach route in the intersection frame"""
    if movement is Movement.STRAIGHT:
        return _line((1.5 * w, -half), (1.5 * w, half), spacing)
    if movement is Movement.LEFT:
        x0, y_exit = 0.5 * w, 0.5 * w
        cx, cy = x0 - radius, y_exit - radius
        segments = []
        if cy > -half:
            segments.append(_line((x0, -half), (x0, cy), spacing))
        segments.append(_arc((cx, cy), radius, 0.0, math.pi / 2.0, spacing))
        if cx > -half:
            segments.append(_line((cx, y_exit), (-half, y_exit), spacing))
        return _join(segments)
    x0, y_exit = 2.5 * w, -1.5 * w
    cx, cy = x0 + radius, y_exit - radius
    segments = []
    if cy > -half:
        segments.append(_line((x0, -half), (x0, cy), spacing))
    segments.append(_arc((cx, cy), radius, math.pi, math.pi / 2.0, spacing))
    if cx < half:
        segments.append(_line((cx, y_exit), (half, y_exit), spacing))
    return _join(segments)


def _rotate(xs, ys, ths, quarter_turns: int):
    angle = quarter_turns * math.pi / 2.0
    c, s = round(math.cos(angle)), round(math.sin(angle))
    return c * xs - s * ys, s * xs + c * ys, ths + angle


@dataclass
class IntersectionLayout:
    """Fixed four-way intersection and its 12 crossing routes"""
    lane_width: float
    comm_distance: float
    lateral_accel: float
    routes: Dict[str, Route] = field(default_factory=dict)

    @property
    def half_size(self) -> float:
        """The region is the square [-half_size, half_size]^2"""
        return 3.0 * self.lane_width

    @property
    def region(self) -> Tuple[float, float, float, float]:
        h = self.half_size
        return (-h, -h, h, h)

    @property
    def max_route_length(self) -> float:
        return max(r.total_length for r in self.routes.values())

    def route(self, rid: str) -> Route:
        try:
            return self.routes[rid]
        except KeyError:
            raise UnknownRouteError(f"Unknown route id: {rid}") from None

    def routes_from(self, approach: Approach) -> List[Route]:
        return [r for r in self.routes.values() if r.approach is approach]

    def route_for(self, approach: Approach, movement: Movement) -> Route:
        return self.route(route_id(approach, movement))

    @property
    def lanes(self) -> List[str]:
        return sorted({r.entry_lane for r in self.routes.values()})


def build_layout(lane_width: float = 3.5, comm_distance: float = 50.0,
                 v_max: float = V_MAX, a_min: float = 4.5,
                 left_turn_radius: Optional[float] = None,
                 right_turn_radius: Optional[float] = None,
                 lateral_accel: float = 2.5) -> IntersectionLayout:
    """
    Build the intersection geometry

    Args:
        lane_width: Lane width in meters
        comm_distance: Length of the communication region before the entrance line
        v_max: Maximum allowed speed (for the stopping distance check)
        a_min: Maximum deceleration magnitude
        left_turn_radius: Left turn arc radius (default 3 lane widths, which
            keeps opposing left turns apart)
        right_turn_radius: Right turn arc radius (default half a lane width)
        lateral_accel: Lateral acceleration cap for turn speeds

    Returns:
        IntersectionLayout with 12 routes

    Raises:
        LayoutError: For non-positive sizes, infeasible radii, or a communication
            region shorter than the stopping distance
    """
    if lane_width <= 0 or comm_distance <= 0:
        raise LayoutError(f"Invalid layout size: lane_width={lane_width}, comm_distance={comm_distance}")
    needed = stopping_distance(v_max, a_min)
    if comm_distance < needed:
        raise LayoutError(
            f"Communication distance {comm_distance} m is below the stopping distance {needed:.2f} m"
        )
    w = lane_width
    half = 3.0 * w
    left_r = 3.0 * w if left_turn_radius is None else left_turn_radius
    right_r = 0.5 * w if right_turn_radius is None else right_turn_radius
    if not 0 < left_r <= 3.5 * w:
        raise LayoutError(f"Invalid left turn radius: {left_r}. Must be in (0, {3.5 * w}]")
    if not 0 < right_r <= 0.5 * w:
        raise LayoutError(f"Invalid right turn radius: {right_r}. Must be in (0, {0.5 * w}]")

    spacing = min(0.05, w / 80.0)
    layout = IntersectionLayout(lane_width=w, comm_distance=comm_distance,
                                lateral_accel=lateral_accel)
    radii = {Movement.LEFT: left_r, Movement.STRAIGHT: None, Movement.RIGHT: right_r}
    for movement in Movement:
        local, fine = None, spacing
        while local is None or len(local[0]) < MIN_ROUTE_SAMPLES:
            local = _local_route(movement, w, half, radii[movement], fine)
            fine /= 2.0
        for approach in Approach:
            xs, ys, ths = _rotate(*local, approach.value)
            rid = route_id(approach, movement)
            layout.routes[rid] = Route(rid, approach, movement, xs, ys, ths,
                                       radius=radii[movement])
    logger.info("Built layout: lane width %.2f m, %d routes, L_m = %.2f m",
                w, len(layout.routes), layout.max_route_length)
    return layout


# =============================================================================
# Conflict zones
# =============================================================================

@dataclass
class _PairZone:
    compatible: bool
    window: Optional[Tuple[float, float]]
    grid: Optional[np.ndarray] = None
    other_lo: Optional[np.ndarray] = None
    other_hi: Optional[np.ndarray] = None


class ConflictZoneTable:
    """
    Per ordered route pair conflict windows

    Windows are expressed in vehicle-center arc length on the first route of
    the pair. `window` is the coarse zone (buffered); `space_window` maps one
    center position on the first route to the window of center positions on
    the second route that can overlap it.
    """

    def __init__(self, pairs: Dict[Tuple[str, str], _PairZone], step: float, buffer: float):
        self._pairs = pairs
        self.step = step
        self.buffer = buffer
        self.route_ids = sorted({a for a, _ in pairs})

    def _pair(self, a: str, b: str) -> _PairZone:
        try:
            return self._pairs[(a, b)]
        except KeyError:
            missing = a if a not in self.route_ids else b
            raise UnknownRouteError(f"Unknown route id: {missing}") from None

    def compatible(self, a: str, b: str) -> bool:
        return self._pair(a, b).compatible

    def window(self, a: str, b: str) -> Optional[Tuple[float, float]]:
        """Buffered center arc-length window on route a, None when compatible"""
        return self._pair(a, b).window

    def space_window(self, a: str, b: str, s_center: float) -> Optional[Tuple[float, float]]:
        """Center arc-length window on route b that may overlap a center at s_center on a"""
        zone = self._pair(a, b)
        if zone.compatible:
            return None
        grid = zone.grid
        i = int(np.searchsorted(grid, s_center))
        idx = [j for j in (i - 1, i) if 0 <= j < len(grid)]
        lo = zone.other_lo[idx]
        hi = zone.other_hi[idx]
        if np.all(np.isnan(lo)):
            return None
        return float(np.nanmin(lo)), float(np.nanmax(hi))

    def incompatible_with(self, a: str) -> List[str]:
        return [b for b in self.route_ids if not self.compatible(a, b)]


def compute_conflict_zones(layout: IntersectionLayout, length: float, width: float,
                           buffer: Optional[float] = None, step: float = 0.1) -> ConflictZoneTable:
    """
    Precompute conflict windows for every ordered pair of routes

    Occupancies of the vehicle envelope are sampled every `step` meters of
    center arc length along each route, grown by the largest displacement a
    pose can undergo between samples, and tested pairwise. The resulting
    windows therefore contain every position at which a real occupancy of at
    most envelope size can overlap the other route.

    Args:
        layout: Intersection layout
        length: Envelope length (largest vehicle)
        width: Envelope width
        buffer: Extra arc length added to each side of coarse windows
            (default one envelope length)
        step: Sampling step along the routes

    Returns:
        ConflictZoneTable
    """
    buffer = length if buffer is None else buffer
    r_min = min((r.radius for r in layout.routes.values() if r.radius), default=math.inf)
    reach = 0.5 * math.hypot(length, width)
    margin = 0.5 * step * (1.0 + reach / r_min) + 0.01

    samples = {}
    for rid, route in layout.routes.items():
        # centers from the entrance line to beyond the last occupancy of any DTOT
        grid = np.arange(-length / 2.0, route.total_length + length + step, step)
        x, y, th = route.poses_at(grid)
        corners = corners_array(x, y, th, length + 2 * margin, width + 2 * margin)
        samples[rid] = (grid, th, corners)

    pairs: Dict[Tuple[str, str], _PairZone] = {}
    ids = sorted(layout.routes)
    for i, a in enumerate(ids):
        for b in ids[i:]:
            grid_a, th_a, c_a = samples[a]
            grid_b, th_b, c_b = samples[b]
            hits = rects_overlap_matrix(c_a, th_a, c_b, th_b)
            if a == b:
                hits |= np.eye(len(grid_a), dtype=bool)
            pairs[(a, b)] = _pair_zone(hits, grid_a, grid_b, step, buffer)
            if a != b:
                pairs[(b, a)] = _pair_zone(hits.T, grid_b, grid_a, step, buffer)

    table = ConflictZoneTable(pairs, step, buffer)
    n_conflicting = sum(1 for (a, b), z in pairs.items() if a < b and not z.compatible)
    logger.info("Conflict zone table: %d incompatible route pairs of %d", n_conflicting,
                len(ids) * (len(ids) - 1) // 2)
    return table


def _pair_zone(hits: np.ndarray, grid_a: np.ndarray, grid_b: np.ndarray,
               step: float, buffer: float) -> _PairZone:
    rows = np.flatnonzero(hits.any(axis=1))
    if len(rows) == 0:
        return _PairZone(compatible=True, window=None)
    window = (float(grid_a[rows[0]] - step - buffer), float(grid_a[rows[-1]] + step + buffer))
    lo = np.full(len(grid_a), np.nan)
    hi = np.full(len(grid_a), np.nan)
    for i in rows:
        cols = np.flatnonzero(hits[i])
        lo[i] = grid_b[cols[0]] - step
        hi[i] = grid_b[cols[-1]] + step
    return _PairZone(compatible=False, window=window, grid=grid_a, other_lo=lo, other_hi=hi)


def route_compatible(table: ConflictZoneTable, a: str, b: str) -> bool:
    """
    True iff vehicles on routes a and b can never overlap

    A route is never compatible with itself.

    Raises:
        UnknownRouteError: If either id is unknown
    """
    if a == b:
        table._pair(a, b)
        return False
    return table.compatible(a, b)
