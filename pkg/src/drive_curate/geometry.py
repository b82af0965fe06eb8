"""Camera models, rigid transforms and the orbital pose parameterization.

Conventions
-----------
Camera frame follows the usual computer-vision layout: x right, y down,
z forward along the optical axis. Pixel centers sit at integer coordinates.
A ``RigidTransform`` maps world points into the camera frame::

    X_cam = R @ X_world + t        camera center C = -R.T @ t

The object frame is given by an ``ObjectBox3D``: x-axis toward the vehicle
front, z-axis up. Orbital poses are measured in that frame:

    elevation  asin(p_z / |p|)
    azimuth    atan2(p_y, p_x), wrapped to (-pi, pi]
    distance   |p|

where ``p`` is the camera center relative to the box center.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import CoincidentCenters, InvalidPose, NumericallySingular, PoleDegenerate

POLE_EPS = 1e-6
CENTER_EPS = 1e-6
ORTHO_TOL = 1e-9


def wrap_angle(x: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    r = math.remainder(x, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


def wrap_angles(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    r = np.remainder(x + np.pi, 2.0 * np.pi) - np.pi
    return np.where(r <= -np.pi, r + 2.0 * np.pi, r)


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


def is_rotation(m: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        return False
    # scalar arithmetic: this runs for every transform built, so avoid numpy overhead
    a, b, c, d, e, f, g, h, i = m.ravel().tolist()
    if not all(math.isfinite(x) for x in (a, b, c, d, e, f, g, h, i)):
        return False
    gram = (
        a * a + d * d + g * g - 1.0, b * b + e * e + h * h - 1.0, c * c + f * f + i * i - 1.0,
        a * b + d * e + g * h, a * c + d * f + g * i, b * c + e * f + h * i,
    )
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return max(abs(x) for x in gram) <= tol and abs(det - 1.0) <= tol


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}"
            )

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_fov(cls, fov_deg: float, width: int, height: int) -> "CameraModel":
        """Square-pixel camera with horizontal FOV and principal point at (w/2, h/2)."""
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Pinhole projection of (N, 3) camera-frame points to (N, 2) pixels."""
        p = np.asarray(points_cam, dtype=np.float64)
        z = p[..., 2]
        u = self.fx * p[..., 0] / z + self.cx
        v = self.fy * p[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    def unproject(self, uv: np.ndarray) -> np.ndarray:
        """Back-project pixels to camera-frame rays with z = 1."""
        uv = np.asarray(uv, dtype=np.float64)
        x = (uv[..., 0] - self.cx) / self.fx
        y = (uv[..., 1] - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
            int(d["width"]), int(d["height"]),
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """World-to-camera (or frame-to-frame) SE(3) transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        if not is_rotation(self.rotation):
            raise InvalidPose("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(self.translation)):
            raise InvalidPose("translation must be finite")

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Origin of the target frame expressed in the source frame (camera center)."""
        return -self.rotation.T @ self.translation

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self o other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class OrbitalPose:
    """Camera pose relative to an object: (elevation, azimuth, distance).

    The azimuth is wrapped to (-pi, pi] on construction.
    """

    elevation_rad: float
    azimuth_rad: float
    distance_m: float

    def __post_init__(self):
        a, t, z = float(self.elevation_rad), float(self.azimuth_rad), float(self.distance_m)
        if not (math.isfinite(a) and math.isfinite(t) and math.isfinite(z)):
            raise InvalidPose("orbital pose components must be finite")
        if abs(a) > math.pi / 2:
            raise InvalidPose(f"elevation {a} outside [-pi/2, pi/2]")
        if z <= 0:
            raise InvalidPose(f"distance must be positive, got {z}")
        object.__setattr__(self, "elevation_rad", a)
        object.__setattr__(self, "azimuth_rad", wrap_angle(t))
        object.__setattr__(self, "distance_m", z)

    @classmethod
    def from_degrees(cls, elevation_deg: float, azimuth_deg: float, distance_m: float):
        return cls(math.radians(elevation_deg), math.radians(azimuth_deg), distance_m)

    def degrees(self) -> tuple[float, float, float]:
        return (math.degrees(self.elevation_rad), math.degrees(self.azimuth_rad), self.distance_m)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.elevation_rad, self.azimuth_rad, self.distance_m)

    def direction(self) -> np.ndarray:
        """Unit vector from object center toward the camera, in the object frame."""
        ca = math.cos(self.elevation_rad)
        return np.array(
            [ca * math.cos(self.azimuth_rad), ca * math.sin(self.azimuth_rad),
             math.sin(self.elevation_rad)]
        )


@dataclass(frozen=True, eq=False)
class ObjectBox3D:
    center_world: np.ndarray
    dimensions: np.ndarray  # length (x), width (y), height (z)
    heading_world: np.ndarray  # columns are the object axes in world coordinates

    def __post_init__(self):
        object.__setattr__(self, "center_world", _frozen(self.center_world, (3,)))
        object.__setattr__(self, "dimensions", _frozen(self.dimensions, (3,)))
        object.__setattr__(self, "heading_world", _frozen(self.heading_world, (3, 3)))
        if not np.all(self.dimensions > 0):
            raise InvalidPose(f"box dimensions must be positive, got {self.dimensions}")
        if not is_rotation(self.heading_world):
            raise InvalidPose("box heading is not a proper rotation")

    def __eq__(self, other):
        if not isinstance(other, ObjectBox3D):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("center_world", "dimensions", "heading_world")
        )

    __hash__ = None

    @classmethod
    def axis_aligned(cls, center=(0.0, 0.0, 0.0), dimensions=(4.5, 1.9, 1.6)):
        return cls(np.asarray(center, float), np.asarray(dimensions, float), np.eye(3))

    @classmethod
    def from_quaternion(cls, center, dimensions, quat_wxyz) -> "ObjectBox3D":
        q = np.asarray(quat_wxyz, dtype=np.float64)
        rot = Rotation.from_quat(q, scalar_first=True).as_matrix()
        return cls(np.asarray(center, float), np.asarray(dimensions, float), rot)

    def quaternion_wxyz(self) -> np.ndarray:
        return Rotation.from_matrix(self.heading_world).as_quat(scalar_first=True)

    def to_object(self, points_world: np.ndarray) -> np.ndarray:
        return (np.asarray(points_world, dtype=np.float64) - self.center_world) @ self.heading_world

    def to_world(self, points_obj: np.ndarray) -> np.ndarray:
        return np.asarray(points_obj, dtype=np.float64) @ self.heading_world.T + self.center_world

    def corners(self) -> np.ndarray:
        """The 8 box corners in world coordinates."""
        half = self.dimensions / 2.0
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
        )
        return self.to_world(signs * half)


@dataclass(frozen=True)
class RelativeOrbital:
    d_elevation_rad: float
    d_azimuth_rad: float
    d_distance_m: float


def orbital_from_camera(cam: RigidTransform, box: ObjectBox3D) -> OrbitalPose:
    """Recover the orbital pose of a camera center in the object frame."""
    p = box.to_object(cam.center)
    z = float(np.linalg.norm(p))
    if z < CENTER_EPS:
        raise CoincidentCenters(f"camera center within {z:.3g} m of the box center")
    horizontal = math.hypot(p[0], p[1])
    elevation = math.atan2(p[2], horizontal)
    if math.pi / 2 - abs(elevation) < POLE_EPS:
        raise PoleDegenerate("camera is directly above or below the object; azimuth undefined")
    return OrbitalPose(elevation, math.atan2(p[1], p[0]), z)


def orbital_rotation_object(elevation: float, azimuth: float) -> np.ndarray:
    """Rows are the camera right/down/forward axes in the object frame, zero roll."""
    sa, ca = math.sin(elevation), math.cos(elevation)
    st, ct = math.sin(azimuth), math.cos(azimuth)
    return np.array(
        [
            [-st, ct, 0.0],
            [sa * ct, sa * st, -ca],
            [-ca * ct, -ca * st, -sa],
        ]
    )


def orbital_to_camera(pose: OrbitalPose, box: ObjectBox3D) -> RigidTransform:
    """Orbital camera looking at the box center, upright w.r.t. the box z-axis."""
    center = box.to_world(pose.direction() * pose.distance_m)
    rot = orbital_rotation_object(pose.elevation_rad, pose.azimuth_rad) @ box.heading_world.T
    return RigidTransform(rot, -rot @ center)


def virtual_rotation(cam_pose: RigidTransform, box: ObjectBox3D) -> np.ndarray:
    """Rotation about the camera center that turns ``cam_pose`` into the orbital camera.

    New camera coordinates are ``R @ old``, so the orbital world-to-camera
    rotation equals ``R @ cam_pose.rotation``.
    """
    orbital = orbital_to_camera(orbital_from_camera(cam_pose, box), box)
    return orbital.rotation @ cam_pose.rotation.T


def rotational_homography(k_src: CameraModel, k_dst: CameraModel, rot: np.ndarray) -> np.ndarray:
    """Pixel homography ``K_dst @ rot @ K_src^-1`` normalized to H[2, 2] = 1."""
    rot = np.asarray(rot, dtype=np.float64)
    if not is_rotation(rot, tol=1e-6):
        raise InvalidPose("homography rotation must be orthonormal")
    h = k_dst.K @ rot @ k_src.K_inv
    if abs(h[2, 2]) < 1e-12:
        raise NumericallySingular("H[2,2] vanishes; cannot normalize", homography=h)
    return h / h[2, 2]


def relative_orbital(src: OrbitalPose, trg: OrbitalPose) -> RelativeOrbital:
    return RelativeOrbital(
        trg.elevation_rad - src.elevation_rad,
        wrap_angle(trg.azimuth_rad - src.azimuth_rad),
        trg.distance_m - src.distance_m,
    )


class AzimuthBucket(enum.Enum):
    B_0_30 = "0-30"
    B_30_60 = "30-60"
    B_60_180 = "60-180"


def azimuth_bucket(d_azimuth_rad: float) -> AzimuthBucket:
    """Half-open buckets on |wrapped azimuth change| in degrees."""
    # rounding absorbs rad<->deg conversion noise at the 30/60 boundaries
    deg = round(abs(math.degrees(wrap_angle(d_azimuth_rad))), 9)
    if deg < 30.0:
        return AzimuthBucket.B_0_30
    if deg < 60.0:
        return AzimuthBucket.B_30_60
    return AzimuthBucket.B_60_180


def relative_transform(src: RigidTransform, trg: RigidTransform) -> RigidTransform:
    """Transform mapping target-camera coordinates to source-camera coordinates."""
    return src.compose(trg.inverse())


def project_world(k: CameraModel, cam: RigidTransform, points_world: np.ndarray) -> np.ndarray:
    return k.project(cam.apply(points_world))


def apply_homography(h: np.ndarray, uv: np.ndarray) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    hom = uv @ h[:, :2].T + h[:, 2]
    return hom[..., :2] / hom[..., 2:3]
