from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadloc3d import box3d, calib
from roadloc3d.box3d import Box3D, Dimension3D, Rect2D
from roadloc3d.errors import DegenerateRect, EmptyInput


def random_box(rng) -> Box3D:
    a, b = rng.uniform(1.4, 13.0, 2)
    dim = Dimension3D(max(a, b), min(a, b), rng.uniform(1.2, 3.0))
    return Box3D(
        (rng.uniform(-12, 12), rng.uniform(5, 120), dim.h / 2), dim, int(rng.integers(3))
    )


# ---------------------------------------------------------------------------
# Vertex construction

class TestGtVertices:
    def test_direct_substitution(self):
        box = Box3D((0.0, 0.0, 0.75), Dimension3D(4.0, 2.0, 1.5))
        vs = box3d.gt_vertices(box)
        assert np.allclose(vs.points[1], [-1.0, -2.0, 0.0])   # minimum corner
        assert np.allclose(vs.points[7], [1.0, 2.0, 1.5])     # maximum corner

    def test_degenerate_dimensions_collapse_to_centroid(self):
        # Zero sizes are outside the Dimension3D contract; check the limit
        # by shrinking instead.
        eps = 1e-12
        box = Box3D((3.0, 7.0, 1.0), Dimension3D(eps, eps, eps))
        vs = box3d.gt_vertices(box)
        assert np.allclose(vs.points, np.array(box.centroid), atol=1e-11)

    def test_substitution_oracle_published_car_dims(self):
        # small car dims from the published per-vehicle results
        dim = Dimension3D(3.26, 1.67, 1.31)
        centroid = np.array([4.0, 38.0, dim.h / 2])
        vs = box3d.gt_vertices(Box3D(tuple(centroid), dim))
        signs_x = np.array([1, -1, -1, 1, 1, -1, -1, 1])
        signs_y = np.array([-1, -1, 1, 1, -1, -1, 1, 1])
        signs_z = np.array([-1, -1, -1, -1, 1, 1, 1, 1])
        expected = centroid + np.stack(
            [signs_x * dim.w / 2, signs_y * dim.l / 2, signs_z * dim.h / 2], axis=1
        )
        assert np.allclose(vs.points, expected)

    def test_edge_length_invariants(self, rng):
        for _ in range(100):
            box = random_box(rng)
            vs = box3d.gt_vertices(box)
            w, l, h = vs.edge_lengths()
            assert w == pytest.approx(box.dim.w, abs=1e-9)
            assert l == pytest.approx(box.dim.l, abs=1e-9)
            assert h == pytest.approx(box.dim.h, abs=1e-9)
            assert vs.is_axis_aligned()

    def test_length_width_swap_warns(self):
        with pytest.warns(UserWarning):
            Dimension3D(1.5, 2.0, 1.4)


class TestProjVertices:
    def test_equals_gt_vertices_when_dimensions_agree(self, rng):
        for _ in range(1000):
            box = random_box(rng)
            vs = box3d.gt_vertices(box)
            rebuilt = box3d.proj_vertices(vs.points[1], box.dim)
            assert np.allclose(rebuilt.points, vs.points, atol=1e-12)

    def test_unit_cube_at_origin(self):
        vs = box3d.proj_vertices(np.zeros(3), Dimension3D(1.0, 1.0, 1.0))
        assert np.allclose(vs.points.min(axis=0), [0, 0, 0])
        assert np.allclose(vs.points.max(axis=0), [1, 1, 1])
        assert np.allclose(vs.points[1], [0, 0, 0])

    def test_longer_length_shifts_only_far_face(self):
        base = Box3D((0.0, 10.0, 0.7), Dimension3D(4.0, 1.8, 1.4))
        anchor = box3d.gt_vertices(base).points[1]
        a = box3d.proj_vertices(anchor, base.dim).points
        b = box3d.proj_vertices(anchor, Dimension3D(4.1, 1.8, 1.4)).points
        moved = ~np.isclose(a, b).all(axis=1)
        # exactly the four +length corners move, by +0.1 in y
        assert list(np.nonzero(moved)[0]) == [2, 3, 6, 7]
        assert np.allclose(b[moved] - a[moved], [0.0, 0.1, 0.0])


# ---------------------------------------------------------------------------
# Projection to pixels

class TestProjectBox:
    def test_symmetric_cube_projects_symmetrically_about_cx(self):
        p = calib.CalibrationParams(2000.0, 0.3, 0.0, 9.0, 960.0, 540.0)
        H = calib.build_projection(p)
        # box straddling the optical-axis ground point, zero pan
        y0 = p.h / np.tan(p.phi)
        box = Box3D((0.0, y0, 0.75), Dimension3D(3.0, 1.5, 1.5))
        uv = box3d.project_box(H, box3d.gt_vertices(box))
        u = uv[:, 0] - p.cx
        # mirror pairs share |u|: (1,2), (4,3), (5,6), (8,7)
        for a, b in ((0, 1), (3, 2), (4, 5), (7, 6)):
            assert u[a] == pytest.approx(-u[b], abs=1e-9)

    def test_bottom_vertices_round_trip(self, scene_a_projection):
        box = Box3D((2.0, 45.0, 0.7), Dimension3D(4.4, 1.8, 1.4))
        vs = box3d.gt_vertices(box)
        uv = box3d.project_box(scene_a_projection, vs)
        back = calib.image_to_world(scene_a_projection, uv[:4], z=0.0)
        assert np.allclose(back, vs.points[:4], atol=1e-9)

    def test_scene_a_octet_matches_direct_evaluation(self, scene_a_projection):
        box = Box3D((0.0, 50.0, 0.7), Dimension3D(4.5, 1.8, 1.4))
        uv = box3d.project_box(scene_a_projection, box3d.gt_vertices(box))
        # oracle: raw projective division per corner
        H = scene_a_projection.matrix
        hom = np.hstack([box3d.gt_vertices(box).points, np.ones((8, 1))])
        q = hom @ H.T
        assert np.allclose(uv, q[:, :2] / q[:, 2:3], atol=1e-12)


# ---------------------------------------------------------------------------
# Rectangles

class TestMinExternalRect:
    def test_single_point(self):
        r = box3d.min_external_rect(np.array([[3.0, 4.0]]))
        assert (r.x_min, r.y_min, r.x_max, r.y_max) == (3.0, 4.0, 3.0, 4.0)
        assert r.area == 0.0

    def test_unit_square_corners(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        r = box3d.min_external_rect(pts)
        assert (r.x_min, r.y_min, r.x_max, r.y_max) == (0.0, 0.0, 1.0, 1.0)

    def test_projected_octet(self, scene_a_projection):
        box = Box3D((0.0, 50.0, 0.7), Dimension3D(4.5, 1.8, 1.4))
        uv = box3d.project_box(scene_a_projection, box3d.gt_vertices(box))
        r = box3d.min_external_rect(uv)
        assert (r.x_min, r.y_min) == (uv[:, 0].min(), uv[:, 1].min())
        assert (r.x_max, r.y_max) == (uv[:, 0].max(), uv[:, 1].max())

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            box3d.min_external_rect(np.zeros((0, 2)))


# ---------------------------------------------------------------------------
# IoU

def mc_iou3d_oracle(a: Box3D, b: Box3D, n: int = 200_000, seed: int = 7) -> float:
    """Point-sampling IoU over the union's bounding volume."""
    rng = np.random.default_rng(seed)
    lo = np.minimum(a.min_corner(), b.min_corner())
    hi = np.maximum(a.max_corner(), b.max_corner())
    pts = rng.uniform(lo, hi, size=(n, 3))
    in_a = np.all((pts >= a.min_corner()) & (pts <= a.max_corner()), axis=1)
    in_b = np.all((pts >= b.min_corner()) & (pts <= b.max_corner()), axis=1)
    either = int(np.count_nonzero(in_a | in_b))
    return float(np.count_nonzero(in_a & in_b)) / either if either else 0.0


class TestIou3d:
    def test_identical(self):
        a = Box3D((1.0, 2.0, 0.7), Dimension3D(4.0, 1.8, 1.4))
        assert box3d.iou3d(a, a) == 1.0

    def test_disjoint(self):
        a = Box3D((0.0, 0.0, 0.5), Dimension3D(1.0, 1.0, 1.0))
        b = Box3D((10.0, 0.0, 0.5), Dimension3D(1.0, 1.0, 1.0))
        assert box3d.iou3d(a, b) == 0.0

    def test_half_offset_unit_cubes(self):
        a = Box3D((0.0, 0.0, 0.5), Dimension3D(1.0, 1.0, 1.0))
        b = Box3D((0.5, 0.0, 0.5), Dimension3D(1.0, 1.0, 1.0))
        assert box3d.iou3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_against_sampling_oracle(self, rng):
        for _ in range(25):
            a = random_box(rng)
            shift = rng.uniform(-0.5, 0.5, 3) * a.dim.as_array()[[1, 0, 2]]
            l, w, h = a.dim.as_array() * rng.uniform(0.7, 1.3, 3)
            b = Box3D(
                tuple(np.array(a.centroid) + shift),
                Dimension3D(max(l, w), min(l, w), h),
                a.class_id,
            )
            approx = mc_iou3d_oracle(a, b)
            assert box3d.iou3d(a, b) == pytest.approx(approx, abs=5e-3)

    @settings(max_examples=100, deadline=None)
    @given(
        dx=st.floats(-3, 3), dy=st.floats(-3, 3), dz=st.floats(-1, 1),
        tx=st.floats(-50, 50), ty=st.floats(-50, 50),
    )
    def test_symmetry_and_translation_invariance(self, dx, dy, dz, tx, ty):
        a = Box3D((0.0, 0.0, 0.7), Dimension3D(4.2, 1.8, 1.4))
        b = Box3D((dx, dy, 0.7 + dz), Dimension3D(3.9, 1.7, 1.5))
        t = np.array([tx, ty, 0.0])
        a2 = Box3D(tuple(np.array(a.centroid) + t), a.dim)
        b2 = Box3D(tuple(np.array(b.centroid) + t), b.dim)
        assert box3d.iou3d(a, b) == pytest.approx(box3d.iou3d(b, a), abs=1e-14)
        assert box3d.iou3d(a, b) == pytest.approx(box3d.iou3d(a2, b2), abs=1e-12)


class TestIou2d:
    def test_identical(self):
        r = Rect2D(0.0, 0.0, 2.0, 3.0)
        assert box3d.iou2d(r, r) == 1.0

    def test_disjoint(self):
        assert box3d.iou2d(Rect2D(0, 0, 1, 1), Rect2D(5, 5, 6, 6)) == 0.0

    def test_concentric_quarter(self):
        outer = Rect2D(-1.0, -1.0, 1.0, 1.0)
        inner = Rect2D(-0.5, -0.5, 0.5, 0.5)
        assert box3d.iou2d(outer, inner) == pytest.approx(0.25, abs=1e-15)

    def test_zero_area_union_is_zero(self):
        point = Rect2D(3.0, 4.0, 3.0, 4.0)
        assert box3d.iou2d(point, point) == 0.0

    def test_invalid_rect_rejected(self):
        with pytest.raises(ValueError):
            Rect2D(1.0, 0.0, 0.0, 1.0)


class TestCiouLoss:
    def test_exact_match_is_zero(self):
        r = Rect2D(10.0, 20.0, 50.0, 80.0)
        assert box3d.ciou_loss(r, r) == 0.0

    def test_concentric_same_aspect(self):
        # areas 4:1, shared center and aspect: only the IoU term remains
        pred = Rect2D(-1.0, -1.0, 1.0, 1.0)
        gt = Rect2D(-0.5, -0.5, 0.5, 0.5)
        assert box3d.ciou_loss(pred, gt) == pytest.approx(0.75, abs=1e-15)

    def test_adjacent_unit_squares(self):
        # hand evaluation: IoU 0, center gap^2 1, enclosing diagonal^2 5,
        # equal aspect ratios -> 1 + 1/5
        pred = Rect2D(0.0, 0.0, 1.0, 1.0)
        gt = Rect2D(1.0, 0.0, 2.0, 1.0)
        assert box3d.ciou_loss(pred, gt) == pytest.approx(1.2, abs=1e-15)

    def test_monotone_in_center_distance_for_fixed_shape(self):
        gt = Rect2D(0.0, 0.0, 1.0, 1.0)
        prev = -1.0
        for shift in np.linspace(0.0, 3.0, 13):
            pred = Rect2D(shift, 0.0, shift + 1.0, 1.0)
            val = box3d.ciou_loss(pred, gt)
            assert val >= prev - 1e-12
            prev = val

    def test_equals_one_minus_iou_when_centered_same_aspect(self, rng):
        for _ in range(50):
            w, h = rng.uniform(1, 20), rng.uniform(1, 20)
            s = rng.uniform(0.2, 2.0)
            pred = Rect2D(-w * s / 2, -h * s / 2, w * s / 2, h * s / 2)
            gt = Rect2D(-w / 2, -h / 2, w / 2, h / 2)
            assert box3d.ciou_loss(pred, gt) == pytest.approx(
                1.0 - box3d.iou2d(pred, gt), abs=1e-12
            )

    def test_zero_area_target_rejected(self):
        with pytest.raises(DegenerateRect):
            box3d.ciou_loss(Rect2D(0, 0, 1, 1), Rect2D(0, 0, 0, 0))

    def test_nonnegative(self, rng):
        for _ in range(200):
            a = np.sort(rng.uniform(0, 100, 2))
            b = np.sort(rng.uniform(0, 100, 2))
            c = np.sort(rng.uniform(0, 100, 2))
            d = np.sort(rng.uniform(0, 100, 2))
            pred = Rect2D(a[0], b[0], a[1], b[1])
            gt = Rect2D(c[0], d[0], c[1] + 1.0, d[1] + 1.0)
            assert box3d.ciou_loss(pred, gt) >= 0.0
