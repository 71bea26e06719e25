from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import params_for
from scene_presets import SCENES

from roadloc3d import calib
from roadloc3d.errors import (
    DegenerateBackprojection,
    DegenerateProjection,
    InsufficientMarks,
)


# ---------------------------------------------------------------------------
# Oracles

def axis_angle_rotation(axis, angle: float) -> np.ndarray:
    """Generic Rodrigues rotation, independent of the closed form under test."""
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    cc = 1 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def rotation_oracle(phi: float, theta: float) -> np.ndarray:
    return axis_angle_rotation([1, 0, 0], phi + math.pi / 2) @ axis_angle_rotation(
        [0, 0, 1], theta
    )


def projection_oracle(p: calib.CalibrationParams) -> np.ndarray:
    K = np.array([[p.f, 0, p.cx], [0, p.f, p.cy], [0, 0, 1.0]])
    T = np.array([[1.0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, -p.h]])
    return K @ rotation_oracle(p.phi, p.theta) @ T


# ---------------------------------------------------------------------------
# Intrinsics

class TestIntrinsics:
    def test_identity_case(self):
        p = calib.CalibrationParams(1.0, 0.3, 0.0, 1.0, 0.0, 0.0)
        assert np.array_equal(calib.build_intrinsics(p), np.eye(3))

    def test_scene_a_focal(self, scene_a_params):
        K = calib.build_intrinsics(scene_a_params)
        expected = np.array([[2878.13, 0, 960], [0, 2878.13, 540], [0, 0, 1.0]])
        assert np.array_equal(K, expected)

    def test_direct_substitution(self):
        p = calib.CalibrationParams(2.0, 0.3, 0.0, 1.0, 3.0, 4.0)
        assert np.array_equal(
            calib.build_intrinsics(p), np.array([[2, 0, 3], [0, 2, 4], [0, 0, 1.0]])
        )

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            calib.CalibrationParams(-1.0, 0.3, 0.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            calib.CalibrationParams(1.0, 0.3, 0.0, -2.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            calib.CalibrationParams(1.0, 1.8, 0.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            calib.CalibrationParams(1.0, 0.3, 1.7, 1.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Rotation

class TestRotation:
    def test_zero_angles(self):
        expected = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0.0]])
        assert np.allclose(calib.build_rotation(0.0, 0.0), expected, atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(
        phi=st.floats(-1.5, 1.5), theta=st.floats(-1.5, 1.5)
    )
    def test_orthonormal_unit_determinant(self, phi, theta):
        R = calib.build_rotation(phi, theta)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(R) - 1.0) < 1e-12

    def test_scene_a_angles_match_axis_angle_oracle(self):
        phi, theta = SCENES["A"]["phi"], SCENES["A"]["theta"]
        R = calib.build_rotation(phi, theta)
        assert np.allclose(R, rotation_oracle(phi, theta), atol=1e-14)
        # frozen values from the oracle
        expected = np.array(
            [
                [0.96481959337, -0.262912822529, 0.0],
                [-0.046743215134, -0.17153507153, -0.984068489016],
                [0.258724224009, 0.94944855942, -0.177789788587],
            ]
        )
        assert np.allclose(R, expected, atol=1e-11)


# ---------------------------------------------------------------------------
# Projection matrix

class TestProjection:
    def test_trivial_composition(self):
        # Limit of the zero-angle case: phi -> 0 is outside the valid tilt
        # range, so compose the pieces directly.
        K = np.eye(3)
        R = calib.build_rotation(0.0, 0.0)
        T = calib.build_translation(0.0)
        H = K @ R @ T
        assert np.allclose(H, np.array([[1, 0, 0, 0], [0, 0, -1, 0], [0, 1, 0, 0.0]]))

    def test_scene_a_matches_matrix_product_oracle(self, scene_a_params):
        H = calib.build_projection(scene_a_params).matrix
        assert np.allclose(H, projection_oracle(scene_a_params), atol=1e-9)

    def test_scaling_first_two_intrinsic_rows_scales_projection(self, scene_a_params):
        c = 2.5
        K = calib.build_intrinsics(scene_a_params)
        R = calib.build_rotation(scene_a_params.phi, scene_a_params.theta)
        T = calib.build_translation(scene_a_params.h)
        Kc = K.copy()
        Kc[:2] *= c
        H = K @ R @ T
        Hc = Kc @ R @ T
        assert np.allclose(Hc[:2], c * H[:2])
        assert np.allclose(Hc[2], H[2])

    def test_rank_enforced(self):
        with pytest.raises(ValueError):
            calib.ProjectionMatrix(np.zeros((3, 4)))


# ---------------------------------------------------------------------------
# World -> image

class TestWorldToImage:
    def test_world_origin_lands_on_principal_column(self, scene_a_params):
        p = scene_a_params
        uv = calib.world_to_image(calib.build_projection(p), np.zeros(3))
        assert uv[0] == pytest.approx(p.cx, abs=1e-9)
        assert uv[1] == pytest.approx(p.cy + p.f / math.tan(p.phi), abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(theta=st.floats(-1.3, 1.3))
    def test_origin_u_is_cx_for_all_pan_angles(self, theta):
        p = calib.CalibrationParams(1500.0, 0.3, theta, 8.0, 960.0, 540.0)
        uv = calib.world_to_image(calib.build_projection(p), np.zeros(3))
        assert uv[0] == pytest.approx(960.0, abs=1e-9)

    def test_scene_a_ground_point(self, scene_a_projection):
        uv = calib.world_to_image(scene_a_projection, np.array([0.0, 50.0, 0.0]))
        # oracle: explicit evaluation of the projective division
        H = scene_a_projection.matrix
        q = H @ np.array([0.0, 50.0, 0.0, 1.0])
        assert np.allclose(uv, q[:2] / q[2])
        assert np.allclose(uv, [192.114582485131, 620.6759773607], atol=1e-8)

    def test_round_trip_with_backprojection(self, scene_a_projection, rng):
        pts = np.column_stack(
            [rng.uniform(-12, 12, 50), rng.uniform(5, 150, 50), np.zeros(50)]
        )
        uv = calib.world_to_image(scene_a_projection, pts)
        back = calib.image_to_world(scene_a_projection, uv, z=0.0)
        assert np.abs(back - pts).max() < 1e-9

    def test_degenerate_point_raises_with_index(self, scene_a_params):
        H = calib.build_projection(scene_a_params)
        # A point on the camera plane: z_c = 0.  Build one by moving from the
        # camera center along a direction orthogonal to the optical axis.
        R = calib.build_rotation(scene_a_params.phi, scene_a_params.theta)
        cam = np.array([0.0, 0.0, scene_a_params.h])
        lateral = cam + 10.0 * R[0]  # x_c axis expressed in world coords
        with pytest.raises(DegenerateProjection) as err:
            calib.world_to_image(H, np.vstack([np.zeros(3), lateral]))
        assert err.value.index == 1


# ---------------------------------------------------------------------------
# Image -> world

class TestImageToWorld:
    def test_principal_point_hits_optical_axis_ground_point(self):
        p = calib.CalibrationParams(2000.0, 0.35, 0.0, 9.0, 960.0, 540.0)
        out = calib.image_to_world(
            calib.build_projection(p), np.array([p.cx, p.cy]), z=0.0
        )
        assert out[0] == pytest.approx(0.0, abs=1e-9)
        assert out[1] == pytest.approx(p.h / math.tan(p.phi), abs=1e-9)
        assert out[2] == 0.0

    def test_horizon_pixel_is_degenerate(self, scene_a_params):
        vp = calib.vp_from_params(scene_a_params)
        H = calib.build_projection(scene_a_params)
        with pytest.raises(DegenerateBackprojection):
            calib.image_to_world(H, np.array([vp.u0, vp.v0]), z=0.0)

    def test_round_trip_at_height(self, scene_a_projection, rng):
        pts = np.column_stack(
            [rng.uniform(-10, 10, 30), rng.uniform(10, 100, 30), np.full(30, 1.3)]
        )
        uv = calib.world_to_image(scene_a_projection, pts)
        back = calib.image_to_world(scene_a_projection, uv, z=1.3)
        assert np.abs(back - pts).max() < 1e-9


# ---------------------------------------------------------------------------
# Vanishing point

class TestVanishingPoint:
    def test_zero_pan_gives_u0_cx(self):
        p = calib.CalibrationParams(1500.0, 0.25, 0.0, 8.0, 960.0, 540.0)
        vp = calib.vp_from_params(p)
        assert vp.u0 == pytest.approx(960.0, abs=1e-12)

    def test_zero_angle_limit_converges_to_principal_point(self):
        # phi = 0 itself is outside the tilt range; the limit is (cx, cy)
        p = calib.CalibrationParams(1500.0, 1e-12, 0.0, 8.0, 960.0, 540.0)
        vp = calib.vp_from_params(p)
        assert vp.u0 == pytest.approx(960.0, abs=1e-6)
        assert vp.v0 == pytest.approx(540.0, abs=1e-6)

    def test_formula_matches_far_point_projection(self, scene_a_params):
        vp = calib.vp_from_params(scene_a_params)
        far = calib.world_to_image(
            calib.build_projection(scene_a_params), np.array([0.0, 1e9, 0.0])
        )
        assert vp.u0 == pytest.approx(far[0], abs=1e-4)
        assert vp.v0 == pytest.approx(far[1], abs=1e-4)
        assert (vp.u0, vp.v0) == pytest.approx(
            (163.013923821763, 20.01370845807162), abs=1e-9
        )

    def test_angle_extraction_inverts_forward_map(self, rng):
        for _ in range(200):
            f = rng.uniform(500, 5000)
            phi = rng.uniform(0.05, 0.6)
            theta = rng.uniform(-0.5, 0.5)
            p = calib.CalibrationParams(f, phi, theta, 10.0, 960.0, 540.0)
            vp = calib.vp_from_params(p)
            phi2, theta2 = calib.angles_from_vp(vp, f, p.cx, p.cy)
            assert abs(phi2 - phi) < 1e-10
            assert abs(theta2 - theta) < 1e-10


# ---------------------------------------------------------------------------
# Calibration solve

def synthesize_marks(params: calib.CalibrationParams) -> list[calib.GroundMark]:
    """Project known ground segments through the true camera."""
    H = calib.build_projection(params)
    marks = []
    segments = [
        ((-5.0, 20.0), (-5.0, 26.0), calib.ALONG_ROAD),
        ((2.0, 35.0), (2.0, 41.0), calib.ALONG_ROAD),
        ((6.0, 55.0), (6.0, 61.0), calib.ALONG_ROAD),
        ((-2.0, 70.0), (-2.0, 76.0), calib.ALONG_ROAD),
        ((-4.0, 25.0), (-0.5, 25.0), calib.ACROSS_ROAD),
        ((1.0, 50.0), (4.5, 50.0), calib.ACROSS_ROAD),
    ]
    for (x1, y1), (x2, y2), kind in segments:
        uv = calib.world_to_image(H, np.array([[x1, y1, 0.0], [x2, y2, 0.0]]))
        length = math.hypot(x2 - x1, y2 - y1)
        marks.append(
            calib.GroundMark(
                endpoints=((uv[0, 0], uv[0, 1]), (uv[1, 0], uv[1, 1])),
                world_length=length,
                kind=kind,
            )
        )
    return marks


class TestSolveVwl:
    @pytest.mark.parametrize("scene", ["A", "C"])  # positive and negative pan
    def test_recovers_synthesized_parameters(self, scene):
        params = params_for(scene)
        vp = calib.vp_from_params(params)
        marks = synthesize_marks(params)
        sol = calib.solve_vwl(vp, marks, SCENES[scene]["image_size"])
        assert abs(sol.params.f - params.f) / params.f < 0.01
        assert abs(sol.params.h - params.h) / params.h < 0.01
        assert abs(sol.params.phi - params.phi) / params.phi < 0.005
        assert abs(sol.params.theta - params.theta) / abs(params.theta) < 0.005

    def test_centered_vp_gives_exactly_zero_pan(self):
        params = calib.CalibrationParams(1500.0, 0.3, 0.0, 8.0, 960.0, 540.0)
        vp = calib.vp_from_params(params)
        assert vp.u0 == params.cx
        marks = synthesize_marks(params)
        sol = calib.solve_vwl(vp, marks, (1920, 1080))
        assert sol.params.theta == 0.0

    def test_insufficient_marks(self, scene_a_params):
        vp = calib.vp_from_params(scene_a_params)
        marks = [m for m in synthesize_marks(scene_a_params) if m.kind == calib.ALONG_ROAD]
        with pytest.raises(InsufficientMarks):
            calib.solve_vwl(vp, marks, (1920, 1080))

    def test_solution_reproduces_the_vanishing_point(self, scene_a_params):
        vp = calib.vp_from_params(scene_a_params)
        sol = calib.solve_vwl(vp, synthesize_marks(scene_a_params), (1920, 1080))
        vp2 = calib.vp_from_params(sol.params)
        assert vp2.u0 == pytest.approx(vp.u0, abs=0.5)
        assert vp2.v0 == pytest.approx(vp.v0, abs=0.5)


# ---------------------------------------------------------------------------
# Bulk invariants

class TestBulkInvariants:
    def test_round_trip_over_random_cameras(self, rng):
        worst = 0.0
        for _ in range(1000):
            p = calib.CalibrationParams(
                f=rng.uniform(500, 5000),
                phi=rng.uniform(0.05, 0.6),
                theta=rng.uniform(-0.5, 0.5),
                h=rng.uniform(5, 15),
                cx=960.0,
                cy=540.0,
            )
            H = calib.build_projection(p)
            pts = np.column_stack(
                [rng.uniform(-15, 15, 8), rng.uniform(5, 150, 8), np.zeros(8)]
            )
            uv = calib.world_to_image(H, pts)
            back = calib.image_to_world(H, uv, z=0.0)
            worst = max(worst, float(np.abs(back - pts).max()))
        assert worst < 1e-6


# ---------------------------------------------------------------------------
# Image-frame transform helpers

class TestImageTransforms:
    def test_mirror_matrix_involution(self, scene_a_projection):
        F = calib.mirror_matrix(1920)
        H2 = calib.transform_projection(F, scene_a_projection)
        uv = calib.world_to_image(scene_a_projection, np.array([3.0, 40.0, 0.0]))
        uv_m = calib.world_to_image(H2, np.array([3.0, 40.0, 0.0]))
        assert uv_m[0] == pytest.approx(1920 - 1 - uv[0])
        assert uv_m[1] == pytest.approx(uv[1])

    def test_scale_matrix_rescales_pixels(self, scene_a_projection):
        S = calib.scale_matrix((1920, 1080), (512, 512))
        Hs = calib.transform_projection(S, scene_a_projection)
        p = np.array([2.0, 60.0, 0.0])
        uv = calib.world_to_image(scene_a_projection, p)
        uv_s = calib.world_to_image(Hs, p)
        assert uv_s[0] == pytest.approx(uv[0] * 512 / 1920)
        assert uv_s[1] == pytest.approx(uv[1] * 512 / 1080)
