import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from heal3d.geometry import Box3D, rotate_box_pi_z
from heal3d.probmap import (
    VoxelGrid,
    build_class_maps,
    distance_corrections,
    gaussian_pdf_at,
    merge_regions,
    mixture_density,
    point_corrections,
    point_corrections_from_counts,
    rotate_map_pi_z,
)
from heal3d.scene_io import RunConfig


def pdf_oracle(box, scale, q):
    """Product of three 1-D normals with variance scale * dimension."""
    out = 1.0
    for x, mu, dim in zip(q, (box.cx, box.cy, box.cz), (box.l, box.w, box.h)):
        out *= norm.pdf(x, loc=mu, scale=math.sqrt(scale * dim))
    return out


def sym_config(**kw):
    base = dict(x_min=-12, x_max=12, y_min=-10, y_max=10, z_min=-3, z_max=3, voxel_size=0.4)
    base.update(kw)
    return RunConfig(**base)


class TestVoxelGrid:
    def test_default_dims(self):
        assert VoxelGrid.from_config(RunConfig()).dims == (176, 200, 10)

    def test_centres_strictly_inside(self):
        g = VoxelGrid((0, 1.0, 0, 1.0, 0, 1.0), 0.4)
        assert g.dims == (3, 3, 3)
        for ax in g.axes:
            assert ax.min() > 0 and ax.max() < 1
            np.testing.assert_allclose(np.diff(ax), 0.4)

    def test_symmetric_centres_mirror_exactly(self):
        g = VoxelGrid.from_config(sym_config())
        xs, ys, _ = g.axes
        np.testing.assert_array_equal(xs, -xs[::-1])
        np.testing.assert_array_equal(ys, -ys[::-1])

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            VoxelGrid((1, 0, 0, 1, 0, 1), 0.1)


class TestGaussianPdf:
    def test_peak(self):
        b = Box3D(0, 0, 0, 1, 1, 1)
        assert gaussian_pdf_at(b, 1.0, (0, 0, 0)) == pytest.approx((2 * math.pi) ** -1.5, rel=1e-12)
        assert gaussian_pdf_at(b, 1.0, (0, 0, 0)) == pytest.approx(0.0634936, abs=1e-7)

    def test_one_metre_off(self):
        b = Box3D(0, 0, 0, 1, 1, 1)
        assert gaussian_pdf_at(b, 1.0, (1, 0, 0)) == pytest.approx(pdf_oracle(b, 1.0, (1, 0, 0)), rel=1e-12)
        assert gaussian_pdf_at(b, 1.0, (1, 0, 0)) == pytest.approx(0.0385108, abs=1e-7)

    def test_unit_determinant(self):
        b = Box3D(2, -1, 0.5, 4, 2, 1)
        assert gaussian_pdf_at(b, 0.5, (2, -1, 0.5)) == pytest.approx(pdf_oracle(b, 0.5, (2, -1, 0.5)), rel=1e-12)
        assert gaussian_pdf_at(b, 0.5, (2, -1, 0.5)) == pytest.approx(0.0634936, abs=1e-7)

    def test_yaw_ignored_by_default(self):
        a, b = Box3D(0, 0, 0, 4, 2, 1, yaw=0), Box3D(0, 0, 0, 4, 2, 1, yaw=1.0)
        assert gaussian_pdf_at(a, 1, (1, 1, 0)) == gaussian_pdf_at(b, 1, (1, 1, 0))

    def test_rotated_quarter_turn_swaps_axes(self):
        b = Box3D(0, 0, 0, 4, 2, 1, yaw=math.pi / 2)
        swapped = Box3D(0, 0, 0, 2, 4, 1)
        assert gaussian_pdf_at(b, 1, (0.7, 1.3, 0.2), rotated=True) == pytest.approx(
            gaussian_pdf_at(swapped, 1, (0.7, 1.3, 0.2)), rel=1e-12
        )

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            gaussian_pdf_at(Box3D(0, 0, 0, 1, 1, 1), 0.0, (0, 0, 0))


class TestDistanceCorrections:
    def test_ratio(self):
        boxes = [Box3D(3, 4, 0, 1, 1, 1), Box3D(6, 8, 0, 1, 1, 1)]
        np.testing.assert_allclose(distance_corrections(boxes), [0.5, 1.0], atol=1e-12)

    def test_single(self):
        assert distance_corrections([Box3D(-7, 2, 0, 1, 1, 1)]).tolist() == [1.0]

    def test_clamped(self):
        boxes = [Box3D(0, 0, 0, 1, 1, 1), Box3D(3, 4, 0, 1, 1, 1)]
        np.testing.assert_allclose(distance_corrections(boxes, u_min=0.01), [0.01, 1.0])

    def test_all_at_origin(self):
        assert distance_corrections([Box3D(0, 0, 1, 1, 1, 1)] * 2).tolist() == [1.0, 1.0]

    def test_empty(self):
        assert distance_corrections([]).size == 0

    @given(st.lists(st.tuples(st.floats(-60, 60), st.floats(-60, 60)), min_size=1, max_size=8),
           st.floats(0.01, 100))
    def test_scale_invariant_and_argmax(self, centres, lam):
        boxes = [Box3D(x, y, 0, 1, 1, 1) for x, y in centres]
        u = distance_corrections(boxes, u_min=1e-6)
        dists = [math.hypot(x, y) for x, y in centres]
        if max(dists) > 1e-3:
            assert u[int(np.argmax(dists))] == 1.0
            scaled = distance_corrections([Box3D(lam * x, lam * y, 0, 1, 1, 1) for x, y in centres], u_min=1e-6)
            np.testing.assert_allclose(scaled, u, rtol=1e-9, atol=1e-12)


class TestPointCorrections:
    def test_all_points_one_box(self):
        assert point_corrections_from_counts([1000]).tolist() == [1.0]

    def test_tenth(self):
        u = point_corrections_from_counts([100, 900])
        assert u[0] == pytest.approx(math.log(10) + 1, abs=1e-9)
        assert u[0] == pytest.approx(3.302585, abs=1e-6)

    def test_empty_box(self):
        u = point_corrections_from_counts([0, 1000], epsilon=1e-9)
        assert u[0] == pytest.approx(math.log(1000.000000001 / 1e-9) + 1, rel=1e-12)

    def test_counts_from_cloud(self):
        boxes = [Box3D(0, 0, 0, 2, 2, 2), Box3D(10, 0, 0, 2, 2, 2)]
        pts = np.array([[0, 0, 0, 0]] * 9 + [[10, 0, 0, 0]])
        u = point_corrections(boxes, pts)
        np.testing.assert_allclose(u, [math.log(10 / 9) + 1, math.log(10) + 1], rtol=1e-9)

    @given(st.lists(st.integers(0, 10_000), min_size=1, max_size=10))
    def test_monotone_and_at_least_one(self, counts):
        u = point_corrections_from_counts(counts)
        assert (u >= 1.0 - 1e-12).all()
        order = np.argsort(counts, kind="stable")
        assert (np.diff(u[order]) <= 1e-12).all()


class TestMergeRegions:
    def test_disjoint_kept(self):
        r = [((0, 0, 0), (2, 2, 2)), ((5, 5, 0), (6, 6, 2))]
        assert merge_regions(r) == sorted(r)

    def test_chain_merges(self):
        r = [((0, 0, 0), (2, 2, 1)), ((1, 1, 0), (4, 4, 1)), ((3, 3, 0), (6, 6, 1))]
        assert merge_regions(r) == [((0, 0, 0), (6, 6, 1))]


class TestBuildClassMaps:
    def test_peak_at_centre_cell(self):
        cfg = sym_config(correction_mode="none")
        g = VoxelGrid.from_config(cfg)
        maps = build_class_maps([Box3D(0.1, -0.1, 0.05, 1, 1, 1)], None, g, cfg)
        dens = maps["Car"].densities
        assert np.unravel_index(np.argmax(dens), dens.shape) == g.cell_index((0.1, -0.1, 0.05))

    def test_duplicates_equal_single(self):
        cfg = sym_config(correction_mode="none")
        g = VoxelGrid.from_config(cfg)
        b = Box3D(2, 1, 0, 4, 1.8, 1.5)
        one = build_class_maps([b], None, g, cfg)["Car"].densities
        two = build_class_maps([b, b], None, g, cfg)["Car"].densities
        # the additive floor is applied once to a mixture of twice the mass,
        # so the maps agree only up to a relative shift of order eps*N/mass
        raw = mixture_density([b], [1.0], g, cfg.sigma_truncation)
        expected = (2 * raw + cfg.epsilon_map) / (2 * raw.sum() + cfg.epsilon_map * g.n_cells)
        np.testing.assert_allclose(two, expected, rtol=1e-12, atol=0)
        bound = cfg.epsilon_map * g.n_cells / raw.sum()
        assert np.abs(two - one).max() <= bound * one.max()

    def test_mass_against_quadrature(self):
        cfg = RunConfig(x_min=-5, x_max=5, y_min=-5, y_max=5, z_min=-5, z_max=5, voxel_size=0.1,
                        correction_mode="none")
        g = VoxelGrid.from_config(cfg)
        raw = mixture_density([Box3D(0, 0, 0, 1, 1, 1)], [1.0], g, 3.5)
        # quadrature oracle: probability of the truncated cube is (2 Phi(3.5) - 1)^3
        expected = (2 * norm.cdf(3.5) - 1) ** 3
        assert raw.sum() * 0.1**3 == pytest.approx(expected, rel=2e-3)
        assert abs(raw.sum() * 0.1**3 - 1.0) < 0.02

    def test_categories_split_and_absent(self):
        cfg = sym_config()
        g = VoxelGrid.from_config(cfg)
        maps = build_class_maps([Box3D(3, 0, 0, 4, 2, 1.5, category="Car"),
                                 Box3D(-3, 2, 0, 0.8, 0.6, 1.7, category="Pedestrian")], None, g, cfg)
        assert sorted(maps) == ["Car", "Pedestrian"]
        assert build_class_maps([], None, g, cfg) == {}

    def test_dense_matches_formula(self):
        cfg = sym_config(correction_mode="none", sigma_truncation=50)
        g = VoxelGrid.from_config(cfg)
        b = Box3D(1.3, -0.7, 0.2, 2, 1, 1)
        raw = mixture_density([b], [1.0], g, 50)
        for idx in [(0, 0, 0), (30, 25, 7), (33, 22, 8)]:
            assert raw[idx] == pytest.approx(pdf_oracle(b, 1.0, g.cell_center(*idx)), rel=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["none", "distance", "points", "both"]),
           st.booleans())
    def test_normalized_and_positive(self, seed, mode, rotated):
        rng = np.random.default_rng(seed)
        cfg = sym_config(correction_mode=mode, rotated_covariance=rotated)
        g = VoxelGrid.from_config(cfg)
        boxes = [Box3D(rng.uniform(-11, 11), rng.uniform(-9, 9), rng.uniform(-1, 1),
                       rng.uniform(0.5, 5), rng.uniform(0.5, 2), rng.uniform(1, 2), rng.uniform(-3, 3),
                       str(rng.choice(["Car", "Pedestrian"])))
                 for _ in range(rng.integers(1, 6))]
        pts = np.column_stack([rng.uniform(-12, 12, (500, 2)), rng.uniform(-2, 2, 500), np.zeros(500)])
        for m in build_class_maps(boxes, pts, g, cfg).values():
            dens = m.densities
            assert abs(dens.sum() - 1.0) <= 1e-9
            assert abs(m.total() - 1.0) <= 1e-9
            assert dens.min() > 0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["none", "distance"]), st.booleans())
    def test_equivariance(self, seed, mode, rotated):
        rng = np.random.default_rng(seed)
        cfg = sym_config(correction_mode=mode, rotated_covariance=rotated)
        g = VoxelGrid.from_config(cfg)
        boxes = [Box3D(rng.uniform(-11, 11), rng.uniform(-9, 9), 0.0, rng.uniform(0.5, 5),
                       rng.uniform(0.5, 2), 1.5, rng.uniform(-3, 3)) for _ in range(rng.integers(1, 5))]
        direct = build_class_maps([rotate_box_pi_z(b) for b in boxes], None, g, cfg)["Car"]
        flipped = rotate_map_pi_z(build_class_maps(boxes, None, g, cfg)["Car"])
        assert np.abs(direct.densities - flipped.densities).max() <= 1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_truncation_soundness(self, seed):
        rng = np.random.default_rng(seed)
        g = VoxelGrid.from_config(sym_config())
        boxes = [Box3D(rng.uniform(-10, 10), rng.uniform(-8, 8), rng.uniform(-1, 1), rng.uniform(0.5, 5),
                       rng.uniform(0.5, 2), rng.uniform(1, 2)) for _ in range(rng.integers(1, 5))]
        a = build_class_maps(boxes, None, g, sym_config(correction_mode="none"))["Car"].densities
        b = build_class_maps(boxes, None, g, sym_config(correction_mode="none", sigma_truncation=8.0))["Car"].densities
        assert np.abs(a - b).max() <= 1e-4

    def test_rotate_map_needs_symmetric_grid(self):
        cfg = RunConfig()
        g = VoxelGrid.from_config(cfg)
        m = build_class_maps([Box3D(10, 0, 0, 4, 2, 1.5)], None, g, cfg)["Car"]
        with pytest.raises(ValueError):
            rotate_map_pi_z(m)
