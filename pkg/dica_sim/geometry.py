"""
Geometry primitives for the intersection simulator

Oriented rectangles, time intervals and the overlap / distance tests that all
space and time conflict reasoning is built on. Rectangles are closed sets, so
boundary contact counts as overlap.
"""
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np


# Tolerance used for every geometric comparison (meters)
EPS_GEOM = 1e-9

Point = Tuple[float, float]


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)"""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar position with a heading measured CCW from the +x axis"""
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Invalid pose position: ({self.x}, {self.y}). Must be finite")
        object.__setattr__(self, 'theta', normalize_angle(self.theta))


@dataclass(frozen=True)
class OrientedRect:
    """A rectangle centered at a pose, `length` along the heading"""
    center: Pose
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError(
                f"Invalid rectangle size: {self.length} x {self.width}. Must be positive"
            )

    @cached_property
    def corners(self) -> Tuple[Point, Point, Point, Point]:
        """Corners in CCW order, starting front-left"""
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        hl, hw = self.length / 2.0, self.width / 2.0
        x, y = self.center.x, self.center.y
        return (
            (x + hl * c - hw * s, y + hl * s + hw * c),
            (x - hl * c - hw * s, y - hl * s + hw * c),
            (x - hl * c + hw * s, y - hl * s - hw * c),
            (x + hl * c + hw * s, y + hl * s - hw * c),
        )

    @cached_property
    def axes(self) -> Tuple[Point, Point]:
        """Unit edge normals (heading direction and its left normal)"""
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        return (c, s), (-s, c)

    @cached_property
    def radius(self) -> float:
        """Half-diagonal; bounding circle radius"""
        return 0.5 * math.hypot(self.length, self.width)

    def contains_point(self, x: float, y: float) -> bool:
        """True if the point lies in the closed rectangle"""
        dx, dy = x - self.center.x, y - self.center.y
        (ux, uy), (vx, vy) = self.axes
        return (abs(dx * ux + dy * uy) <= self.length / 2.0 + EPS_GEOM
                and abs(dx * vx + dy * vy) <= self.width / 2.0 + EPS_GEOM)

    def inflated(self, along: float = 0.0, across: float = 0.0) -> 'OrientedRect':
        """Copy grown by `along` at each end and `across` at each side"""
        return OrientedRect(self.center, self.length + 2.0 * along, self.width + 2.0 * across)


@dataclass(frozen=True)
class TimeInterval:
    """Closed time interval [lo, hi] in seconds"""
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"Invalid interval: [{self.lo}, {self.hi}]. lo must not exceed hi")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, t: float) -> bool:
        return self.lo <= t <= self.hi

    def padded(self, pad: float) -> 'TimeInterval':
        return TimeInterval(self.lo - pad, self.hi + pad)


# =============================================================================
# Overlap tests
# =============================================================================

def _project(corners, axis: Point) -> Tuple[float, float]:
    dots = [px * axis[0] + py * axis[1] for px, py in corners]
    return min(dots), max(dots)


def rects_overlap(a: OrientedRect, b: OrientedRect) -> bool:
    """
    Check whether two closed oriented rectangles intersect

    Separating-axis test over the two edge normals of each rectangle, with a
    bounding-circle early exit.

    Args:
        a: First rectangle
        b: Second rectangle

    Returns:
        True if the rectangles share at least one point
    """
    dx = a.center.x - b.center.x
    dy = a.center.y - b.center.y
    reach = a.radius + b.radius + EPS_GEOM
    if dx * dx + dy * dy > reach * reach:
        return False

    ca, cb = a.corners, b.corners
    for axis in a.axes + b.axes:
        lo_a, hi_a = _project(ca, axis)
        lo_b, hi_b = _project(cb, axis)
        if hi_a < lo_b - EPS_GEOM or hi_b < lo_a - EPS_GEOM:
            return False
    return True


def intervals_overlap(a: TimeInterval, b: TimeInterval) -> bool:
    """True iff the closed intervals share a point"""
    return max(a.lo, b.lo) <= min(a.hi, b.hi)


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    """Euclidean distance from point p to segment ab"""
    abx, aby = b[0] - a[0], b[1] - a[1]
    apx, apy = p[0] - a[0], p[1] - a[1]
    denom = abx * abx + aby * aby
    t = 0.0 if denom == 0 else max(0.0, min(1.0, (apx * abx + apy * aby) / denom))
    return math.hypot(apx - t * abx, apy - t * aby)


def rect_distance(a: OrientedRect, b: OrientedRect) -> float:
    """
    Minimum distance between two rectangles

    Returns 0.0 when they overlap. Otherwise the boundaries are disjoint and
    the minimum is attained between a corner of one and an edge of the other.
    """
    if rects_overlap(a, b):
        return 0.0
    best = math.inf
    for corners, other in ((a.corners, b.corners), (b.corners, a.corners)):
        edges = [(other[i], other[(i + 1) % 4]) for i in range(4)]
        for p in corners:
            for e0, e1 in edges:
                best = min(best, point_segment_distance(p, e0, e1))
    return best


# =============================================================================
# Vectorized helpers (offline zone computation)
# =============================================================================

def corners_array(xs: np.ndarray, ys: np.ndarray, thetas: np.ndarray,
                  length: float, width: float) -> np.ndarray:
    """Corner coordinates of many rectangles, shape (n, 4, 2)"""
    c, s = np.cos(thetas), np.sin(thetas)
    hl, hw = length / 2.0, width / 2.0
    signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    out = np.empty((len(xs), 4, 2))
    for i, (sl, sw) in enumerate(signs):
        out[:, i, 0] = xs + sl * hl * c - sw * hw * s
        out[:, i, 1] = ys + sl * hl * s + sw * hw * c
    return out


def _axes_array(thetas: np.ndarray) -> np.ndarray:
    c, s = np.cos(thetas), np.sin(thetas)
    return np.stack([np.stack([c, s], axis=-1), np.stack([-s, c], axis=-1)], axis=1)


def rects_overlap_matrix(corners_a: np.ndarray, thetas_a: np.ndarray,
                         corners_b: np.ndarray, thetas_b: np.ndarray) -> np.ndarray:
    """
    Pairwise overlap of two rectangle families

    Args:
        corners_a: (n, 4, 2) corners of the first family
        thetas_a: (n,) headings of the first family
        corners_b: (m, 4, 2) corners of the second family
        thetas_b: (m,) headings of the second family

    Returns:
        Boolean matrix of shape (n, m), same semantics as rects_overlap
    """
    result = np.ones((len(corners_a), len(corners_b)), dtype=bool)
    for axes, own_first in ((_axes_array(thetas_a), True), (_axes_array(thetas_b), False)):
        for k in range(2):
            axis = axes[:, k, :]
            if own_first:
                proj_own = np.einsum('nkc,nc->nk', corners_a, axis)
                proj_other = np.einsum('mkc,nc->nmk', corners_b, axis)
                own_lo, own_hi = proj_own.min(axis=1)[:, None], proj_own.max(axis=1)[:, None]
                other_lo, other_hi = proj_other.min(axis=2), proj_other.max(axis=2)
            else:
                proj_own = np.einsum('mkc,mc->mk', corners_b, axis)
                proj_other = np.einsum('nkc,mc->nmk', corners_a, axis)
                own_lo, own_hi = proj_own.min(axis=1)[None, :], proj_own.max(axis=1)[None, :]
                other_lo, other_hi = proj_other.min(axis=2), proj_other.max(axis=2)
            result &= ~((own_hi < other_lo - EPS_GEOM) | (other_hi < own_lo - EPS_GEOM))
    return result

