import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cinelens.errors import EmptyTrackError, ValidationError
from cinelens.vehicle import (
    CameraMount,
    Pose,
    PoseKeyframe,
    camera_world_pose,
    interpolate_pose,
    keyframes_from_list,
    mount_from_dict,
    quat_conjugate,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_slerp,
)

Z_AXIS = (0.0, 0.0, 1.0)


def yaw(angle_deg: float) -> np.ndarray:
    return quat_from_axis_angle(Z_AXIS, math.radians(angle_deg))


class TestQuaternions:
    def test_identity_rotation(self):
        v = quat_rotate((1.0, 0.0, 0.0, 0.0), (1.0, 2.0, 3.0))
        assert v == pytest.approx([1.0, 2.0, 3.0])

    def test_yaw_quarter_turn(self):
        assert quat_rotate(yaw(90.0), (1.0, 0.0, 0.0)) == pytest.approx(
            [0.0, 1.0, 0.0], abs=1e-12
        )

    def test_multiply_composes(self):
        q = quat_multiply(yaw(30.0), yaw(60.0))
        assert quat_rotate(q, (1.0, 0.0, 0.0)) == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)

    def test_conjugate_inverts(self):
        q = yaw(37.0)
        v = quat_rotate(quat_conjugate(q), quat_rotate(q, (1.0, 2.0, 3.0)))
        assert v == pytest.approx([1.0, 2.0, 3.0], abs=1e-12)

    def test_normalize_rejects_zero(self):
        with pytest.raises(ValidationError):
            quat_normalize((0.0, 0.0, 0.0, 0.0))

    def test_slerp_endpoints_exact(self):
        q0, q1 = yaw(0.0), yaw(90.0)
        assert np.array_equal(quat_slerp(q0, q1, 0.0), q0)
        assert np.array_equal(quat_slerp(q0, q1, 1.0), q1)

    def test_slerp_midpoint_is_half_angle(self):
        mid = quat_slerp(yaw(0.0), yaw(90.0), 0.5)
        assert quat_rotate(mid, (1.0, 0.0, 0.0)) == pytest.approx(
            [math.cos(math.radians(45.0)), math.sin(math.radians(45.0)), 0.0], abs=1e-12
        )

    def test_slerp_takes_shortest_arc(self):
        # q and -q encode the same rotation; slerp must not take the long way
        q0 = yaw(0.0)
        q1 = -yaw(10.0)
        mid = quat_slerp(q0, q1, 0.5)
        rotated = quat_rotate(mid, (1.0, 0.0, 0.0))
        angle = math.degrees(math.atan2(rotated[1], rotated[0]))
        assert angle == pytest.approx(5.0, abs=1e-9)


class TestPose:
    def test_quaternion_must_be_unit(self):
        with pytest.raises(ValidationError):
            Pose(position=(0.0, 0.0, 0.0), orientation=(1.0, 1.0, 0.0, 0.0))

    def test_position_must_be_finite(self):
        with pytest.raises(ValidationError):
            Pose(position=(math.inf, 0.0, 0.0))

    def test_approx_equal_handles_negated_quaternion(self):
        p = Pose(position=(1.0, 2.0, 3.0), orientation=yaw(30.0))
        q = Pose(position=(1.0, 2.0, 3.0), orientation=-yaw(30.0))
        assert p.approx_equal(q)


class TestInterpolation:
    TRACK = (
        PoseKeyframe(t=0.0, pose=Pose(position=(0.0, 0.0, 0.0), orientation=yaw(0.0))),
        PoseKeyframe(t=10.0, pose=Pose(position=(10.0, 0.0, 0.0), orientation=yaw(90.0))),
    )

    def test_exact_at_keyframes(self):
        for kf in self.TRACK:
            pose = interpolate_pose(self.TRACK, kf.t)
            assert np.array_equal(pose.position, kf.pose.position)
            assert np.array_equal(pose.orientation, kf.pose.orientation)

    def test_position_midpoint(self):
        pose = interpolate_pose(self.TRACK, 5.0)
        assert pose.position == pytest.approx([5.0, 0.0, 0.0])

    def test_orientation_midpoint_half_yaw(self):
        pose = interpolate_pose(self.TRACK, 5.0)
        forward = quat_rotate(pose.orientation, (1.0, 0.0, 0.0))
        assert forward == pytest.approx(
            [math.cos(math.radians(45.0)), math.sin(math.radians(45.0)), 0.0], abs=1e-12
        )

    def test_clamped_outside_range(self):
        before = interpolate_pose(self.TRACK, -5.0)
        after = interpolate_pose(self.TRACK, 99.0)
        assert np.array_equal(before.position, self.TRACK[0].pose.position)
        assert np.array_equal(after.position, self.TRACK[-1].pose.position)

    def test_empty_track_raises(self):
        with pytest.raises(EmptyTrackError):
            interpolate_pose((), 0.0)

    def test_non_increasing_times_rejected(self):
        bad = (
            PoseKeyframe(t=1.0, pose=Pose(position=(0.0, 0.0, 0.0))),
            PoseKeyframe(t=1.0, pose=Pose(position=(1.0, 0.0, 0.0))),
        )
        with pytest.raises(ValidationError):
            interpolate_pose(bad, 0.5)

    def test_single_keyframe_is_constant(self):
        track = (PoseKeyframe(t=2.0, pose=Pose(position=(3.0, 4.0, 5.0))),)
        for t in (0.0, 2.0, 100.0):
            assert interpolate_pose(track, t).position == pytest.approx([3.0, 4.0, 5.0])

    @settings(deadline=None)
    @given(t=st.floats(min_value=0.0, max_value=10.0))
    def test_interpolated_quaternion_always_unit(self, t):
        pose = interpolate_pose(self.TRACK, t)
        assert np.linalg.norm(pose.orientation) == pytest.approx(1.0, abs=1e-12)

    @settings(deadline=None)
    @given(t=st.floats(min_value=0.001, max_value=9.999))
    def test_continuity(self, t):
        dt = 1e-7
        a = interpolate_pose(self.TRACK, t)
        b = interpolate_pose(self.TRACK, min(t + dt, 10.0))
        assert np.linalg.norm(a.position - b.position) < 1e-5
        assert abs(float(a.orientation @ b.orientation)) > 1.0 - 1e-8


class TestCameraMount:
    def test_identity_mount_passes_pose_through(self):
        pose = Pose(position=(1.0, 2.0, 3.0), orientation=yaw(45.0))
        out = camera_world_pose(pose, CameraMount())
        assert out.position == pytest.approx(pose.position)
        assert abs(float(out.orientation @ pose.orientation)) == pytest.approx(1.0, abs=1e-12)

    def test_yawed_vehicle_rotates_mount_offset(self):
        pose = Pose(position=(0.0, 0.0, 0.0), orientation=yaw(90.0))
        mount = CameraMount(translation=(1.0, 0.0, 0.0))
        out = camera_world_pose(pose, mount)
        # the forward-mounted camera ends up along the vehicle's rotated x axis
        assert out.position == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)

    def test_mount_inverse_recovers_vehicle_pose(self):
        pose = Pose(position=(4.0, -2.0, 7.0), orientation=yaw(123.0))
        mount = CameraMount(translation=(0.5, 0.2, -0.1), rotation=yaw(30.0))
        cam = camera_world_pose(pose, mount)
        inv_rot = quat_conjugate(mount.rotation)
        inverse = CameraMount(
            translation=-quat_rotate(inv_rot, mount.translation), rotation=inv_rot
        )
        back = camera_world_pose(cam, inverse)
        assert back.position == pytest.approx(pose.position, abs=1e-9)
        assert abs(float(back.orientation @ pose.orientation)) == pytest.approx(
            1.0, abs=1e-9
        )

    def test_mount_rotation_must_be_unit(self):
        with pytest.raises(ValidationError):
            CameraMount(rotation=(2.0, 0.0, 0.0, 0.0))


class TestJson:
    def test_keyframes_from_list(self):
        track = keyframes_from_list(
            [
                {"t": 0.0, "position": [0, 0, 1]},
                {"t": 2.0, "position": [4, 0, 1], "orientation": [1, 0, 0, 0]},
            ]
        )
        assert len(track) == 2
        assert track[1].pose.position == pytest.approx([4.0, 0.0, 1.0])

    def test_keyframes_require_increasing_times(self):
        with pytest.raises(ValidationError):
            keyframes_from_list(
                [{"t": 1.0, "position": [0, 0, 0]}, {"t": 0.5, "position": [1, 0, 0]}]
            )

    def test_unknown_keyframe_field_rejected(self):
        with pytest.raises(ValidationError):
            keyframes_from_list([{"t": 0.0, "position": [0, 0, 0], "speed": 1.0}])

    def test_mount_from_dict_defaults_to_identity(self):
        mount = mount_from_dict({})
        assert mount.translation == pytest.approx([0.0, 0.0, 0.0])
        assert mount.rotation == pytest.approx([1.0, 0.0, 0.0, 0.0])
