"""Synthetic shape sampling: analytic-surface and area-uniformity checks."""

import math

import numpy as np
import pytest

from pointcarve import SyntheticShapeSpec, gen_shape


class TestSphere:
    def test_all_points_on_surface(self):
        cloud, cat = gen_shape(SyntheticShapeSpec("sphere", (0.5,), count=4096, seed=0))
        assert cat == "sphere"
        radii = np.linalg.norm(cloud.points, axis=1)
        np.testing.assert_allclose(radii, 0.5, atol=1e-9)


class TestBox:
    def test_points_on_exactly_one_face(self):
        dims = (1.0, 0.7, 0.5)
        cloud, _ = gen_shape(SyntheticShapeSpec("box", dims, count=2048, seed=1))
        on_face = np.zeros(len(cloud), dtype=int)
        for axis, size in enumerate(dims):
            on_face += (np.abs(cloud.points[:, axis]) < 1e-9).astype(int)
            on_face += (np.abs(cloud.points[:, axis] - size) < 1e-9).astype(int)
        assert np.all(on_face == 1)

    def test_area_proportional_face_counts(self):
        sx, sy, sz = 1.0, 0.7, 0.5
        n = 20_000
        cloud, _ = gen_shape(SyntheticShapeSpec("box", (sx, sy, sz), count=n, seed=2))
        areas = {
            "z": sx * sy,  # bottom/top pair handled separately below
            "y": sx * sz,
            "x": sy * sz,
        }
        total = 2 * sum(areas.values())
        pts = cloud.points
        face_counts = {
            ("x", 0): np.sum(np.abs(pts[:, 0]) < 1e-9),
            ("x", 1): np.sum(np.abs(pts[:, 0] - sx) < 1e-9),
            ("y", 0): np.sum(np.abs(pts[:, 1]) < 1e-9),
            ("y", 1): np.sum(np.abs(pts[:, 1] - sy) < 1e-9),
            ("z", 0): np.sum(np.abs(pts[:, 2]) < 1e-9),
            ("z", 1): np.sum(np.abs(pts[:, 2] - sz) < 1e-9),
        }
        for (axis, _), count in face_counts.items():
            p = areas[axis] / total
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(count - n * p) <= 5 * sigma, f"face {axis}: {count} vs {n * p}"


class TestTorus:
    def test_on_torus_surface(self):
        major, minor = 0.35, 0.12
        cloud, _ = gen_shape(SyntheticShapeSpec("torus", (major, minor), count=2048, seed=3))
        ring = np.sqrt(cloud.points[:, 0] ** 2 + cloud.points[:, 1] ** 2)
        tube = np.sqrt((ring - major) ** 2 + cloud.points[:, 2] ** 2)
        np.testing.assert_allclose(tube, minor, atol=1e-9)

    def test_hollow_center(self):
        cloud, _ = gen_shape(SyntheticShapeSpec("torus", count=4096, seed=4))
        ring = np.linalg.norm(cloud.points[:, :2], axis=1)
        assert ring.min() > 0.1  # nothing near the axis: genus-1 hole preserved


class TestHollowBox:
    def test_inner_and_outer_shells(self):
        sx, sy, sz, t = 1.0, 0.8, 0.6, 0.12
        cloud, _ = gen_shape(SyntheticShapeSpec("hollow_box", (sx, sy, sz, t), count=8192, seed=5))
        pts = cloud.points
        on_outer = np.zeros(len(pts), dtype=bool)
        for axis, size in enumerate((sx, sy, sz)):
            on_outer |= np.abs(pts[:, axis]) < 1e-9
            on_outer |= np.abs(pts[:, axis] - size) < 1e-9
        assert on_outer.any() and (~on_outer).any()  # both shells sampled

    def test_wall_too_thick_rejected(self):
        with pytest.raises(ValueError, match="thickness"):
            gen_shape(SyntheticShapeSpec("hollow_box", (1.0, 0.8, 0.6, 0.4), count=128, seed=0))


class TestLSolidAndWedge:
    def test_l_solid_notch_is_empty(self):
        sx, sy, sz, cx, cy = 1.0, 0.8, 0.5, 0.5, 0.4
        cloud, _ = gen_shape(SyntheticShapeSpec("l_solid", (sx, sy, sz, cx, cy), count=4096, seed=6))
        pts = cloud.points
        inside_notch = (
            (pts[:, 0] > sx - cx + 1e-9)
            & (pts[:, 1] > sy - cy + 1e-9)
            & (pts[:, 2] > 1e-9)
            & (pts[:, 2] < sz - 1e-9)
        )
        assert not inside_notch.any()

    def test_wedge_below_hypotenuse(self):
        sx, sy, sz = 1.0, 0.7, 0.6
        cloud, _ = gen_shape(SyntheticShapeSpec("wedge", (sx, sy, sz), count=2048, seed=7))
        # All points satisfy x/sx + z/sz <= 1 (the slanted face plane).
        slack = cloud.points[:, 0] / sx + cloud.points[:, 2] / sz
        assert np.all(slack <= 1.0 + 1e-9)


class TestSpecValidation:
    def test_determinism(self):
        a, _ = gen_shape(SyntheticShapeSpec("box", count=256, seed=42))
        b, _ = gen_shape(SyntheticShapeSpec("box", count=256, seed=42))
        np.testing.assert_array_equal(a.points, b.points)

    def test_count_floor(self):
        with pytest.raises(ValueError, match="count"):
            SyntheticShapeSpec("box", count=32)

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            SyntheticShapeSpec("pyramid")

    def test_negative_dims(self):
        with pytest.raises(ValueError, match="positive"):
            SyntheticShapeSpec("box", (-1.0, 1.0, 1.0))
