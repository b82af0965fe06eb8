import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from drive_curate.errors import (
    CoincidentCenters, InvalidPose, NumericallySingular, PoleDegenerate,
)
from drive_curate.geometry import (
    AzimuthBucket, CameraModel, ObjectBox3D, OrbitalPose, RigidTransform, apply_homography,
    azimuth_bucket, is_rotation, orbital_from_camera, orbital_to_camera, project_world,
    relative_orbital, rotational_homography, virtual_rotation, wrap_angle,
)

from conftest import random_camera, random_rotation

BOX0 = ObjectBox3D.axis_aligned()


def camera_at(center, look_at=(0.0, 0.0, 0.0)):
    """Independent look-at construction: x right, y down, z forward, world z up."""
    c = np.asarray(center, float)
    fwd = np.asarray(look_at, float) - c
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    return RigidTransform(rot, -rot @ c)


class TestWrap:
    def test_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    @given(st.floats(-100, 100, allow_nan=False))
    def test_wrap_is_congruent(self, x):
        w = wrap_angle(x)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(x), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(x), abs_tol=1e-9)


class TestTypes:
    def test_camera_invariants(self):
        with pytest.raises(ValueError):
            CameraModel(0.0, 1.0, 1, 1, 10, 10)
        with pytest.raises(ValueError):
            CameraModel(1.0, 1.0, 10, 1, 10, 10)

    def test_rigid_rejects_non_rotation(self):
        with pytest.raises(InvalidPose):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_inverse_and_compose(self, rng):
        a = RigidTransform(random_rotation(rng), rng.normal(size=3))
        b = RigidTransform(random_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=(5, 3))
        np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)
        np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
        np.testing.assert_allclose(a.compose(b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)

    def test_orbital_pose_invariants(self):
        with pytest.raises(InvalidPose):
            OrbitalPose(0.0, 0.0, 0.0)
        with pytest.raises(InvalidPose):
            OrbitalPose(2.0, 0.0, 1.0)
        assert OrbitalPose(0.0, -math.pi, 1.0).azimuth_rad == pytest.approx(math.pi)

    def test_box_quaternion_matches_scipy(self, rng):
        q_xyzw = Rotation.random(random_state=rng).as_quat()
        q_wxyz = np.roll(q_xyzw, 1)
        box = ObjectBox3D.from_quaternion((1, 2, 3), (4, 2, 1.5), q_wxyz)
        np.testing.assert_allclose(box.heading_world, Rotation.from_quat(q_xyzw).as_matrix(),
                                   atol=1e-12)
        assert box.corners().shape == (8, 3)


class TestOrbitalFromCamera:
    def test_axis_aligned(self):
        p = orbital_from_camera(camera_at((5, 0, 0)), BOX0)
        assert p.as_tuple() == pytest.approx((0.0, 0.0, 5.0), abs=1e-12)

    def test_closed_form(self):
        p = orbital_from_camera(camera_at((1, 1, math.sqrt(2))), BOX0)
        assert p.degrees() == pytest.approx((45.0, 45.0, 2.0), abs=1e-9)

    def test_pole(self):
        cam = RigidTransform(np.diag([1.0, -1.0, -1.0]), np.array([0.0, 0.0, 5.0]))
        assert np.allclose(cam.center, [0, 0, 5])
        with pytest.raises(PoleDegenerate):
            orbital_from_camera(cam, BOX0)

    def test_coincident(self):
        with pytest.raises(CoincidentCenters):
            orbital_from_camera(RigidTransform.identity(), BOX0)

    def test_rotated_box_front_is_zero_azimuth(self):
        heading = Rotation.from_euler("z", 90, degrees=True).as_matrix()
        box = ObjectBox3D((10.0, 0.0, 0.0), (4.5, 1.9, 1.6), heading)
        # box front points along world +y
        p = orbital_from_camera(camera_at((10, 6, 0), look_at=(10, 0, 0)), box)
        assert p.degrees() == pytest.approx((0.0, 0.0, 6.0), abs=1e-9)


class TestOrbitalToCamera:
    def test_trivial(self):
        cam = orbital_to_camera(OrbitalPose(0.0, 0.0, 5.0), BOX0)
        np.testing.assert_allclose(cam.center, [5, 0, 0], atol=1e-12)
        np.testing.assert_allclose(cam.rotation[2], [-1, 0, 0], atol=1e-12)

    def test_spherical_formula(self):
        a, t, z = math.radians(30), math.radians(120), 8.0
        cam = orbital_to_camera(OrbitalPose(a, t, z), BOX0)
        expected = z * np.array([math.cos(a) * math.cos(t), math.cos(a) * math.sin(t), math.sin(a)])
        np.testing.assert_allclose(cam.center, expected, atol=1e-12)

    def test_matches_look_at(self, rng):
        for _ in range(20):
            pose = OrbitalPose(rng.uniform(-1.4, 1.4), rng.uniform(-3, 3), rng.uniform(1, 50))
            ours = orbital_to_camera(pose, BOX0)
            ref = camera_at(ours.center)
            np.testing.assert_allclose(ours.rotation, ref.rotation, atol=1e-12)

    def test_zero_roll_and_axis_through_center(self, rng):
        box = ObjectBox3D((3.0, -2.0, 1.0), (4, 2, 1.5), random_rotation(rng))
        for _ in range(20):
            pose = OrbitalPose(rng.uniform(-1.5, 1.5), rng.uniform(-3, 3), rng.uniform(1, 50))
            cam = orbital_to_camera(pose, box)
            c = cam.apply(box.center_world)
            assert abs(c[0]) < 1e-9 and abs(c[1]) < 1e-9 and c[2] > 0
            # camera x axis stays horizontal in the object frame (no roll)
            right_obj = box.heading_world.T @ cam.rotation[0]
            assert abs(right_obj[2]) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1.5, 1.5), st.floats(-3.14, 3.14), st.floats(0.01, 1e3))
    def test_round_trip(self, a, t, z):
        pose = OrbitalPose(a, t, z)
        back = orbital_from_camera(orbital_to_camera(pose, BOX0), BOX0)
        assert back.elevation_rad == pytest.approx(a, abs=1e-9)
        assert abs(wrap_angle(back.azimuth_rad - pose.azimuth_rad)) < 1e-9
        assert back.distance_m == pytest.approx(z, rel=1e-12, abs=1e-9)


class TestVirtualRotation:
    def test_fixed_point(self):
        cam = orbital_to_camera(OrbitalPose(0.2, 1.0, 7.0), BOX0)
        np.testing.assert_allclose(virtual_rotation(cam, BOX0), np.eye(3), atol=1e-12)

    def test_undoes_pan(self):
        cam = orbital_to_camera(OrbitalPose(0.1, 0.4, 9.0), BOX0)
        pan = Rotation.from_euler("y", 10, degrees=True).as_matrix()
        panned = RigidTransform(pan @ cam.rotation, pan @ cam.translation)
        r = virtual_rotation(panned, BOX0)
        assert is_rotation(r)
        np.testing.assert_allclose(r, pan.T, atol=1e-12)
        # box center lands on the principal point after the rotation
        k = CameraModel(500, 500, 320, 240, 640, 480)
        rotated = RigidTransform(r @ panned.rotation, r @ panned.translation)
        np.testing.assert_allclose(project_world(k, rotated, BOX0.center_world), [320, 240],
                                   atol=1e-9)
        np.testing.assert_allclose(rotated.center, panned.center, atol=1e-12)


class TestHomography:
    def test_identity(self):
        k = CameraModel(500, 500, 320, 240, 640, 480)
        np.testing.assert_allclose(rotational_homography(k, k, np.eye(3)), np.eye(3), atol=1e-15)

    def test_half_turn(self):
        k = CameraModel(500, 500, 320, 240, 640, 480)
        h = rotational_homography(k, k, np.diag([-1.0, -1.0, 1.0]))
        np.testing.assert_allclose(apply_homography(h, [[320 + 7, 240 - 3]]), [[320 - 7, 240 + 3]],
                                   atol=1e-12)

    def test_two_camera_projection_oracle(self, rng):
        for _ in range(20):
            k1, k2 = random_camera(rng), random_camera(rng)
            r = random_rotation(rng)
            pts = rng.normal(size=(200, 3)) + [0, 0, 6]
            pts = pts[(pts[:, 2] > 0.5) & ((pts @ r.T)[:, 2] > 0.5)]
            h = rotational_homography(k1, k2, r)
            direct = k2.project(pts @ r.T)
            np.testing.assert_allclose(apply_homography(h, k1.project(pts)), direct, atol=1e-6)

    def test_singular(self):
        k = CameraModel(500, 500, 0.0, 0.0, 640, 480)
        r = Rotation.from_euler("y", 90, degrees=True).as_matrix()
        with pytest.raises(NumericallySingular) as exc:
            rotational_homography(k, k, r)
        assert exc.value.homography.shape == (3, 3)


class TestRelativeAndBuckets:
    def test_relative_wraps(self):
        rel = relative_orbital(OrbitalPose.from_degrees(0, 170, 5), OrbitalPose.from_degrees(0, -170, 6))
        assert math.degrees(rel.d_azimuth_rad) == pytest.approx(20.0)
        assert rel.d_distance_m == pytest.approx(1.0)

    @pytest.mark.parametrize("deg,bucket", [
        (0, "0-30"), (29.999, "0-30"), (30, "30-60"), (-45, "30-60"),
        (60, "60-180"), (180, "60-180"), (-179, "60-180"),
    ])
    def test_bucket_edges(self, deg, bucket):
        assert azimuth_bucket(math.radians(deg)) is AzimuthBucket(bucket)
