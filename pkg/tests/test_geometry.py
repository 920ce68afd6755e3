"""
Tests for rectangle and interval geometry
"""
import math

import numpy as np
import pytest

from dica_sim.geometry import (
    OrientedRect, Pose, TimeInterval, corners_array, intervals_overlap, rect_distance,
    rects_overlap, rects_overlap_matrix,
)


def square(x, y, theta=0.0, size=1.0):
    return OrientedRect(Pose(x, y, theta), size, size)


def sample_points(rect, n=101):
    """Dense grid of points covering a rectangle"""
    u = np.linspace(-rect.length / 2.0, rect.length / 2.0, n)
    v = np.linspace(-rect.width / 2.0, rect.width / 2.0, n)
    uu, vv = np.meshgrid(u, v)
    c, s = math.cos(rect.center.theta), math.sin(rect.center.theta)
    return (rect.center.x + uu * c - vv * s).ravel(), (rect.center.y + uu * s + vv * c).ravel()


def sampled_overlap(a, b):
    for first, second in ((a, b), (b, a)):
        xs, ys = sample_points(first)
        if any(second.contains_point(x, y) for x, y in zip(xs, ys)):
            return True
    return False


def boundary_distance(a, b, n=400):
    """Minimum distance between densely sampled boundaries"""
    def boundary(rect):
        pts = []
        corners = rect.corners
        for i in range(4):
            p, q = np.array(corners[i]), np.array(corners[(i + 1) % 4])
            f = np.linspace(0.0, 1.0, n)[:, None]
            pts.append(p + f * (q - p))
        return np.vstack(pts)
    pa, pb = boundary(a), boundary(b)
    return float(np.min(np.hypot(pa[:, None, 0] - pb[None, :, 0], pa[:, None, 1] - pb[None, :, 1])))


def test_half_overlapping_squares():
    assert rects_overlap(square(0, 0), square(0.5, 0))


def test_disjoint_squares():
    assert not rects_overlap(square(0, 0), square(3, 0))


def test_rotated_square_against_sampling():
    a, b = square(0, 0), square(1.2, 0, math.pi / 4)
    assert rects_overlap(a, b) == sampled_overlap(a, b)
    assert rects_overlap(a, b)


def test_boundary_contact_counts_as_overlap():
    assert rects_overlap(square(0, 0), square(1.0, 0))
    assert rect_distance(square(0, 0), square(1.0, 0)) == 0.0


def test_overlap_with_itself():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r = OrientedRect(Pose(*rng.uniform(-10, 10, 2), rng.uniform(-math.pi, math.pi)),
                         rng.uniform(0.5, 6), rng.uniform(0.5, 3))
        assert rects_overlap(r, r)


def test_overlap_symmetric_and_rigid_motion_invariant():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = OrientedRect(Pose(0.0, 0.0, rng.uniform(-math.pi, math.pi)), 5.0, 1.8)
        b = OrientedRect(Pose(*rng.uniform(-6, 6, 2), rng.uniform(-math.pi, math.pi)), 5.0, 1.8)
        expected = rects_overlap(a, b)
        assert rects_overlap(b, a) == expected

        phi = rng.uniform(-math.pi, math.pi)
        dx, dy = rng.uniform(-50, 50, 2)
        c, s = math.cos(phi), math.sin(phi)

        def move(r):
            x, y = r.center.x, r.center.y
            return OrientedRect(Pose(c * x - s * y + dx, s * x + c * y + dy, r.center.theta + phi),
                                r.length, r.width)

        # rigid motions may move a touching pair across the tolerance
        if rect_distance(a, b) > 1e-6 or expected:
            assert rects_overlap(move(a), move(b)) == expected


def test_rect_distance_axis_aligned_gap():
    assert rect_distance(square(0, 0), square(3, 0)) == pytest.approx(2.0)


def test_rect_distance_zero_iff_overlap():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = OrientedRect(Pose(0.0, 0.0, rng.uniform(-math.pi, math.pi)), 5.0, 1.8)
        b = OrientedRect(Pose(*rng.uniform(-7, 7, 2), rng.uniform(-math.pi, math.pi)), 5.0, 1.8)
        assert (rect_distance(a, b) == 0.0) == rects_overlap(a, b)


def test_rect_distance_against_boundary_sampling():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 30:
        a = OrientedRect(Pose(*rng.uniform(-2, 2, 2), rng.uniform(-math.pi, math.pi)), 2.0, 1.0)
        b = OrientedRect(Pose(*rng.uniform(-6, 6, 2), rng.uniform(-math.pi, math.pi)), 1.5, 1.0)
        if rects_overlap(a, b):
            continue
        assert rect_distance(a, b) == pytest.approx(boundary_distance(a, b), abs=0.01)
        checked += 1


def test_intervals_overlap():
    assert intervals_overlap(TimeInterval(0, 1), TimeInterval(1, 2))
    assert not intervals_overlap(TimeInterval(0, 1), TimeInterval(1.01, 2))
    assert intervals_overlap(TimeInterval(3.2, 5.0), TimeInterval(4.9, 6.1))


def test_invalid_values():
    with pytest.raises(ValueError):
        TimeInterval(2.0, 1.0)
    with pytest.raises(ValueError):
        OrientedRect(Pose(0, 0), 0.0, 1.0)
    with pytest.raises(ValueError):
        Pose(float('nan'), 0.0)


def test_pose_heading_is_wrapped():
    assert Pose(0, 0, 2.5 * math.pi).theta == pytest.approx(0.5 * math.pi)
    assert Pose(0, 0, -1.5 * math.pi).theta == pytest.approx(0.5 * math.pi)


def test_vectorized_overlap_matches_scalar():
    rng = np.random.default_rng(2)
    n, m = 20, 15
    pa = rng.uniform(-5, 5, (n, 3))
    pb = rng.uniform(-5, 5, (m, 3))
    ca = corners_array(pa[:, 0], pa[:, 1], pa[:, 2], 5.0, 1.8)
    cb = corners_array(pb[:, 0], pb[:, 1], pb[:, 2], 5.0, 1.8)
    matrix = rects_overlap_matrix(ca, pa[:, 2], cb, pb[:, 2])
    for i in range(n):
        ra = OrientedRect(Pose(*pa[i]), 5.0, 1.8)
        assert np.allclose(ca[i], ra.corners)
        for j in range(m):
            assert matrix[i, j] == rects_overlap(ra, OrientedRect(Pose(*pb[j]), 5.0, 1.8))
