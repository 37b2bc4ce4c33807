import math

import numpy as np
import pytest

from app.domain.entities.geometry import CameraIntrinsics, Pose, RgbdFrame, SceneFlowField
from app.domain.exceptions import BehindCameraError, DegenerateSystemError, GeometryError, InvalidDepthError
from app.infrastructure.geometry import align_scale_shift, flow_from_poses, flow_to_rgb, project, unproject, warp_by_flow
from app.infrastructure.simulator.pushworld import PushWorld
from app.domain.entities.world import Action

from tests.conftest import tiny_env_config


def test_unproject_identity_like_intrinsics():
    points = unproject(np.full((4, 3), 2.0), CameraIntrinsics(1.0, 1.0, 0.0, 0.0))
    np.testing.assert_allclose(points[3, 2], [4.0, 6.0, 2.0])


def test_unproject_hand_evaluated_pixel():
    points = unproject(np.full((64, 64), 1.5), CameraIntrinsics(100.0, 100.0, 32.0, 32.0))
    np.testing.assert_allclose(points[32, 52], [0.3, 0.0, 1.5], atol=1e-12)


def test_unproject_rejects_zero_depth_only_at_valid_pixels():
    depth = np.ones((2, 2))
    depth[0, 1] = 0.0
    intrinsics = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    with pytest.raises(InvalidDepthError):
        unproject(depth, intrinsics)
    validity = np.ones((2, 2), dtype=bool)
    validity[0, 1] = False
    assert unproject(depth, intrinsics, validity).shape == (2, 2, 3)


def test_project_round_trip_and_optical_axis():
    intrinsics = CameraIntrinsics(100.0, 100.0, 32.0, 32.0)
    u, v, z = project(np.array([0.3, 0.0, 1.5]), intrinsics)
    assert (float(u), float(v), float(z)) == pytest.approx((52.0, 32.0, 1.5))
    u, v, z = project(np.array([0.0, 0.0, 2.0]), intrinsics)
    assert (float(u), float(v), float(z)) == pytest.approx((32.0, 32.0, 2.0))


def test_project_rejects_points_behind_camera():
    with pytest.raises(BehindCameraError):
        project(np.array([0.0, 0.0, -1.0]), CameraIntrinsics(1.0, 1.0, 0.0, 0.0))


def test_project_inverts_unproject():
    rng = np.random.default_rng(0)
    intrinsics = CameraIntrinsics(40.0, 45.0, 15.5, 16.0)
    depth = rng.uniform(0.5, 2.0, (12, 10))
    u, v, z = project(unproject(depth, intrinsics), intrinsics)
    cols, rows = np.meshgrid(np.arange(10), np.arange(12))
    np.testing.assert_allclose(u, cols, atol=1e-9)
    np.testing.assert_allclose(v, rows, atol=1e-9)
    np.testing.assert_allclose(z, depth, atol=1e-9)


def test_pose_rejects_non_rigid_matrix():
    matrix = np.eye(4)
    matrix[0, 0] = 2.0
    with pytest.raises(ValueError):
        Pose(matrix)


def test_pose_inverse_composes_to_identity():
    pose = Pose.from_xy_yaw(0.1, -0.2, 0.7, z=0.3)
    np.testing.assert_allclose(pose.compose(pose.inverse()).matrix, np.eye(4), atol=1e-12)


# Scene flow

def test_unchanged_poses_give_zero_flow():
    points = np.random.default_rng(1).standard_normal((3, 3, 3))
    ids = np.full((3, 3), 2)
    poses = {2: Pose.from_xy_yaw(0.1, 0.2, 0.3)}
    flow = flow_from_poses(points, ids, poses, dict(poses))
    np.testing.assert_array_equal(flow.flow, 0.0)


def test_translation_moves_only_that_object():
    points = np.random.default_rng(2).standard_normal((2, 2, 3))
    ids = np.array([[0, 2], [2, 3]])
    before = {2: Pose.identity(), 3: Pose.identity()}
    after = {2: Pose.from_xy_yaw(0.1, 0.0), 3: Pose.identity()}
    flow = flow_from_poses(points, ids, before, after).flow
    np.testing.assert_allclose(flow[ids == 2], [[0.1, 0.0, 0.0]] * 2, atol=1e-12)
    np.testing.assert_array_equal(flow[ids != 2], 0.0)


def test_quarter_turn_about_z():
    points = np.array([[[1.0, 0.0, 0.0]]])
    flow = flow_from_poses(points, np.array([[2]]), {2: Pose.identity()}, {2: Pose.from_xy_yaw(0.0, 0.0, math.pi / 2)})
    np.testing.assert_allclose(flow.flow[0, 0], [-1.0, 1.0, 0.0], atol=1e-12)


def test_missing_pose_is_an_error():
    with pytest.raises(GeometryError):
        flow_from_poses(np.zeros((1, 1, 3)), np.array([[4]]), {}, {})


def test_flows_compose_by_pose_transport():
    rng = np.random.default_rng(3)
    points = rng.uniform(-1.0, 1.0, (4, 4, 3))
    ids = np.full((4, 4), 2)
    p0 = {2: Pose.from_xy_yaw(0.0, 0.1, 0.2)}
    p1 = {2: Pose.from_xy_yaw(0.05, 0.1, 0.5)}
    p2 = {2: Pose.from_xy_yaw(-0.1, 0.3, -0.4)}
    f01 = flow_from_poses(points, ids, p0, p1).flow
    f12 = flow_from_poses(points + f01, ids, p1, p2).flow
    f02 = flow_from_poses(points, ids, p0, p2).flow
    np.testing.assert_allclose(f01 + f12, f02, atol=1e-9)


# Warping

def test_zero_flow_warp_is_identity():
    rng = np.random.default_rng(4)
    frame = RgbdFrame(rng.uniform(0, 1, (6, 7, 3)), rng.uniform(0.5, 1.5, (6, 7)))
    warped, coverage = warp_by_flow(frame, SceneFlowField.zeros(6, 7), CameraIntrinsics(10.0, 10.0, 3.0, 3.0))
    np.testing.assert_array_equal(coverage, frame.validity)
    np.testing.assert_allclose(warped.rgb, frame.rgb)
    np.testing.assert_allclose(warped.depth, frame.depth)


def test_receding_flow_shrinks_toward_principal_point():
    rng = np.random.default_rng(5)
    frame = RgbdFrame(rng.uniform(0, 1, (17, 17, 3)), np.ones((17, 17)))
    flow = SceneFlowField(np.broadcast_to([0.0, 0.0, 0.5], (17, 17, 3)).copy())
    warped, coverage = warp_by_flow(frame, flow, CameraIntrinsics(10.0, 10.0, 8.0, 8.0))
    np.testing.assert_allclose(warped.depth[coverage], 1.5)
    assert not coverage[0, 0]
    np.testing.assert_array_equal(warped.rgb[8, 8], frame.rgb[8, 8])


def test_warp_of_simulator_pair_matches_next_frame():
    config = tiny_env_config(height=64, width=64, fx=80.0, fy=80.0, cx=32.0, cy=32.0)
    world = PushWorld(config)
    state = world.reset(3)
    frame = world.render(state)
    following = world.step(state, Action(0.03, -0.02))
    warped, coverage = warp_by_flow(frame, world.gt_flow(state, following, frame), config.intrinsics)
    error = np.abs(warped.rgb - world.render(following).rgb)[coverage]
    assert float(error.mean()) < 0.05


# Depth alignment

def test_align_exact_affine_and_identity():
    d_rel = np.linspace(0.1, 1.0, 20)
    assert align_scale_shift(d_rel, 2.0 * d_rel + 3.0) == pytest.approx((2.0, 3.0))
    assert align_scale_shift(d_rel, d_rel) == pytest.approx((1.0, 0.0), abs=1e-12)


def test_align_rejects_constant_input():
    with pytest.raises(DegenerateSystemError):
        align_scale_shift(np.ones(10), np.arange(10.0))


def test_align_agrees_with_grid_search():
    rng = np.random.default_rng(6)
    d_rel = rng.uniform(-1.0, 1.0, 200)
    d_met = 2.0 * d_rel + 3.0 + rng.normal(0.0, 0.01, 200)
    scale, shift = align_scale_shift(d_rel, d_met)

    scales = np.arange(1.95, 2.05, 1e-3)
    shifts = np.arange(2.95, 3.05, 1e-3)
    residual = ((scales[:, None, None] * d_rel + shifts[None, :, None]) - d_met) ** 2
    i, j = np.unravel_index(np.argmin(residual.sum(axis=-1)), (scales.size, shifts.size))
    assert scale == pytest.approx(scales[i], abs=2e-3)
    assert shift == pytest.approx(shifts[j], abs=2e-3)


# Visualization

def test_flow_to_rgb_zero_and_single_pixel():
    np.testing.assert_array_equal(flow_to_rgb(SceneFlowField.zeros(3, 3)), 0.5)
    values = np.zeros((3, 3, 3))
    values[1, 2, 0] = 0.04
    image = flow_to_rgb(SceneFlowField(values))
    np.testing.assert_allclose(image[1, 2], [1.0, 0.5, 0.5])


def test_flow_to_rgb_negative_x_is_less_red():
    values = np.zeros((2, 2, 3))
    values[0, 0, 0] = -0.02
    values[1, 1, 1] = 0.03
    assert flow_to_rgb(SceneFlowField(values))[0, 0, 0] < 0.5
