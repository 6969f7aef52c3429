import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heal3d.geometry import (
    Box3D,
    count_points_in_box,
    rotate_box_pi_z,
    rotate_points_pi_z,
    transform_box,
    transform_points,
    wrap_to_pi,
)


def wrap_oracle(angle):
    """Brute force: step by 2*pi until inside (-pi, pi]."""
    while angle > math.pi:
        angle -= 2 * math.pi
    while angle <= -math.pi:
        angle += 2 * math.pi
    return angle


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestWrapToPi:
    def test_zero(self):
        assert wrap_to_pi(0.0) == 0.0

    def test_three_pi(self):
        assert wrap_to_pi(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)

    def test_minus_four(self):
        assert wrap_oracle(-4.0) == pytest.approx(2.2832, abs=1e-4)
        assert wrap_to_pi(-4.0) == pytest.approx(wrap_oracle(-4.0), abs=1e-12)

    def test_minus_pi_maps_to_pi(self):
        assert wrap_to_pi(-math.pi) == pytest.approx(math.pi)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            wrap_to_pi(float("nan"))

    @given(finite)
    def test_matches_oracle(self, a):
        w = wrap_to_pi(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


class TestBox3D:
    def test_yaw_normalized(self):
        assert Box3D(0, 0, 0, 1, 1, 1, yaw=7.0).yaw == pytest.approx(7.0 - 2 * math.pi)

    @pytest.mark.parametrize("field", ["l", "w", "h"])
    def test_nonpositive_dims_rejected(self, field):
        kw = dict(cx=0, cy=0, cz=0, l=1, w=1, h=1)
        kw[field] = 0.0
        with pytest.raises(ValueError, match=field):
            Box3D(**kw)

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, 1, 1, 1, confidence=1.5)


class TestRotatePoints:
    def test_sign_flip(self):
        np.testing.assert_array_equal(rotate_points_pi_z([[1, 2, 3]]), [[-1, -2, 3]])

    def test_axis_fixed_point(self):
        np.testing.assert_array_equal(rotate_points_pi_z([[0, 0, 5]]), [[0, 0, 5]])

    def test_involution(self):
        p = np.array([[7.3, -2.1, 0.4, 0.25]])
        np.testing.assert_array_equal(rotate_points_pi_z(rotate_points_pi_z(p)), p)

    def test_reflectance_and_order_kept(self):
        p = np.array([[1, 0, 0, 0.1], [0, 1, 0, 0.9]])
        out = rotate_points_pi_z(p)
        np.testing.assert_array_equal(out[:, 3], [0.1, 0.9])
        np.testing.assert_array_equal(out[:, :2], [[-1, 0], [0, -1]])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="point 1"):
            rotate_points_pi_z([[0, 0, 0], [np.inf, 0, 0]])

    def test_empty(self):
        assert rotate_points_pi_z(np.zeros((0, 4))).shape == (0, 4)


class TestRotateBox:
    def test_example(self):
        b = rotate_box_pi_z(Box3D(10, -5, 0.5, 4, 2, 1.5, yaw=0.3))
        assert (b.cx, b.cy, b.cz) == (-10, 5, 0.5)
        assert b.yaw == pytest.approx(wrap_oracle(0.3 + math.pi), abs=1e-12)
        assert b.yaw == pytest.approx(-2.8416, abs=1e-4)

    def test_origin_yaw_zero(self):
        b = rotate_box_pi_z(Box3D(0, 0, 0, 4, 2, 1.5))
        assert b.yaw == pytest.approx(math.pi)
        assert (b.l, b.w, b.h) == (4, 2, 1.5)

    def test_keeps_label_and_score(self):
        b = rotate_box_pi_z(Box3D(1, 1, 0, 1, 1, 1, category="Cyclist", confidence=0.3))
        assert b.category == "Cyclist" and b.confidence == 0.3

    @given(finite, finite, finite, st.floats(-math.pi, math.pi))
    def test_involution(self, x, y, z, yaw):
        b = Box3D(x, y, z, 1, 2, 3, yaw)
        bb = rotate_box_pi_z(rotate_box_pi_z(b))
        assert (bb.cx, bb.cy, bb.cz) == (b.cx, b.cy, b.cz)
        assert abs(wrap_to_pi(bb.yaw - b.yaw)) <= 1e-12

    @given(finite, finite)
    def test_horizontal_distance_kept(self, x, y):
        b = Box3D(x, y, 0, 1, 1, 1)
        assert abs(rotate_box_pi_z(b).horizontal_distance - b.horizontal_distance) <= 1e-12


def dense_count_oracle(point, box, n=201):
    """Containment by sampling the box volume densely and checking the point
    lies within one sample spacing of the sampled set along each local axis."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    u = np.linspace(-0.5, 0.5, n)
    # world-frame samples along the box's local axes through its centre
    lx = box.cx + np.outer(u * box.l, [c, s])
    ly = box.cy + np.outer(u * box.w, [-s, c])
    # project the point on each sampled axis: nearest sample distance tells
    # whether the projection falls inside the sampled segment
    d = np.array(point[:2]) - np.array([box.cx, box.cy])
    proj_x = np.array([c, s]) @ d
    proj_y = np.array([-s, c]) @ d
    seg_x = np.linalg.norm(lx - np.array([box.cx, box.cy]), axis=1).max()
    seg_y = np.linalg.norm(ly - np.array([box.cx, box.cy]), axis=1).max()
    return int(abs(proj_x) <= seg_x + 1e-12 and abs(proj_y) <= seg_y + 1e-12 and abs(point[2] - box.cz) <= box.h / 2)


class TestCountPointsInBox:
    def test_unit_box(self):
        assert count_points_in_box([[0, 0, 0], [2, 0, 0]], Box3D(0, 0, 0, 1, 1, 1)) == 1

    def test_rotated_excludes(self):
        box = Box3D(0, 0, 0, 2, 1, 1, yaw=math.pi / 2)
        assert dense_count_oracle((0.9, 0, 0), box) == 0
        assert count_points_in_box([[0.9, 0, 0]], box) == 0

    def test_rotated_includes(self):
        box = Box3D(0, 0, 0, 2, 1, 1, yaw=math.pi / 2)
        assert dense_count_oracle((0, 0.9, 0), box) == 1
        assert count_points_in_box([[0, 0.9, 0]], box) == 1

    def test_boundary_inclusive(self):
        assert count_points_in_box([[0.5, 0.5, 0.5]], Box3D(0, 0, 0, 1, 1, 1)) == 1

    def test_empty_cloud(self):
        assert count_points_in_box(np.zeros((0, 4)), Box3D(0, 0, 0, 1, 1, 1)) == 0

    @settings(max_examples=60)
    @given(
        st.floats(-math.pi, math.pi),
        st.floats(-50, 50),
        st.floats(-50, 50),
        st.floats(-math.pi, math.pi),
        st.integers(0, 2**31 - 1),
    )
    def test_rigid_invariance(self, box_yaw, tx, ty, rot, seed):
        rng = np.random.default_rng(seed)
        box = Box3D(rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0, 4.0, 2.0, 1.5, box_yaw)
        pts = np.column_stack([rng.uniform(-15, 15, (300, 2)), rng.uniform(-1, 1, 300)])
        pts[:, :2] += [box.cx, box.cy]
        # drop points within 1e-5 of a face so rounding cannot flip them
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        dx, dy = pts[:, 0] - box.cx, pts[:, 1] - box.cy
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        margin = np.minimum.reduce([
            np.abs(np.abs(lx) - box.l / 2), np.abs(np.abs(ly) - box.w / 2), np.abs(np.abs(pts[:, 2]) - box.h / 2)
        ])
        pts = pts[margin > 1e-5]
        before = count_points_in_box(pts, box)
        after = count_points_in_box(transform_points(pts, rot, tx, ty), transform_box(box, rot, tx, ty))
        assert before == after
