"""Global pose conditions and per-pixel Plücker ray maps."""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    CameraModel,
    ObjectBox3D,
    OrbitalPose,
    RigidTransform,
    orbital_to_camera,
    relative_orbital,
    relative_transform,
    wrap_angle,
)

LATENT_FACTOR = 8


class PoseMode(str, enum.Enum):
    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass(frozen=True, eq=False)
class GlobalPoseCondition:
    mode: PoseMode
    values: np.ndarray  # 4 (relative) or 6 (absolute) floats

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        expected = 4 if self.mode is PoseMode.RELATIVE else 6
        if v.shape != (expected,):
            raise ValueError(f"{self.mode.value} condition needs {expected} values, got {v.shape}")
        if self.mode is PoseMode.RELATIVE and abs(v[1] ** 2 + v[2] ** 2 - 1.0) > 1e-9:
            raise ValueError("relative condition sin/cos pair is not unit norm")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, GlobalPoseCondition):
            return NotImplemented
        return self.mode is other.mode and np.array_equal(self.values, other.values)

    __hash__ = None


def encode_global(
    src: OrbitalPose, trg: OrbitalPose, mode: PoseMode = PoseMode.RELATIVE,
    distance_scale: float = 1.0,
) -> GlobalPoseCondition:
    """Relative: (d_elev, sin d_azim, cos d_azim, d_dist). Absolute: both triples.

    ``distance_scale`` multiplies every distance term (1.0 keeps meters).
    """
    mode = PoseMode(mode)
    if mode is PoseMode.RELATIVE:
        rel = relative_orbital(src, trg)
        vals = [
            rel.d_elevation_rad,
            math.sin(rel.d_azimuth_rad),
            math.cos(rel.d_azimuth_rad),
            rel.d_distance_m * distance_scale,
        ]
    else:
        vals = [
            src.elevation_rad, wrap_angle(src.azimuth_rad), src.distance_m * distance_scale,
            trg.elevation_rad, wrap_angle(trg.azimuth_rad), trg.distance_m * distance_scale,
        ]
    return GlobalPoseCondition(mode, np.array(vals))


@dataclass(frozen=True, eq=False)
class PluckerMap:
    """Per-pixel (moment, direction) 6-vectors, shape (height, width, 6)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 6:
            raise ValueError(f"Plücker data must be HxWx6, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def moment(self) -> np.ndarray:
        return self.data[..., :3]

    @property
    def direction(self) -> np.ndarray:
        return self.data[..., 3:]

    def __eq__(self, other):
        if not isinstance(other, PluckerMap):
            return NotImplemented
        return np.array_equal(self.data, other.data)

    __hash__ = None


def pixel_grid(width: int, height: int) -> np.ndarray:
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([u, v], axis=-1)


def plucker_map(k: CameraModel, rel: RigidTransform, out: tuple[int, int]) -> PluckerMap:
    """Rays of the target camera expressed in the source camera frame.

    ``rel`` maps target-camera coordinates to source-camera coordinates;
    ``k`` are the target intrinsics at the ``out`` resolution.
    """
    width, height = out
    if width <= 0 or height <= 0:
        raise ValueError("output dimensions must be positive")
    rays = k.unproject(pixel_grid(width, height))
    d = rays @ rel.rotation.T
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(rel.translation, d.shape)
    m = np.cross(o, d)
    return PluckerMap(np.concatenate([m, d], axis=-1))


def plucker_shift_check(
    pmap: PluckerMap, lam: float, offset=None, tol: float = 1e-9
) -> bool:
    """Slide every ray origin by ``lam * d`` (plus optional ``offset``) and recompute.

    True when every 6-vector is unchanged within ``tol``. The origin used is
    the point of each line closest to the frame origin, ``d x m``.
    """
    m, d = pmap.moment, pmap.direction
    origin = np.cross(d, m)
    shifted = origin + lam * d
    if offset is not None:
        shifted = shifted + np.asarray(offset, dtype=np.float64)
    m2 = np.cross(shifted, d)
    return bool(np.max(np.abs(m2 - m), initial=0.0) <= tol)


def latent_intrinsics(k: CameraModel, factor: int = LATENT_FACTOR) -> CameraModel:
    """Intrinsics whose pixels are the centres of ``factor`` x ``factor`` cells."""
    w = -(-k.width // factor)
    h = -(-k.height // factor)
    return CameraModel(
        k.fx / factor, k.fy / factor,
        (k.cx + 0.5) / factor - 0.5, (k.cy + 0.5) / factor - 0.5,
        w, h,
    )


def orbital_relative_transform(src: OrbitalPose, trg: OrbitalPose) -> RigidTransform:
    """Target orbital camera w.r.t. source orbital camera (object at the origin)."""
    box = ObjectBox3D.axis_aligned()
    return relative_transform(orbital_to_camera(src, box), orbital_to_camera(trg, box))


def pair_plucker(
    src: OrbitalPose, trg: OrbitalPose, k_target: CameraModel, latent: bool = True
) -> PluckerMap:
    k = latent_intrinsics(k_target) if latent else k_target
    return plucker_map(k, orbital_relative_transform(src, trg), (k.width, k.height))


# .pluecker files: three little-endian uint32 (width, height, 6), then float32 rows.

_HEADER = struct.Struct("<III")


def write_pluecker(pmap: PluckerMap, path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(pmap.width, pmap.height, 6))
        fh.write(np.ascontiguousarray(pmap.data, dtype="<f4").tobytes())


def read_pluecker(path) -> PluckerMap:
    raw = Path(path).read_bytes()
    w, h, c = _HEADER.unpack_from(raw)
    if c != 6:
        raise ValueError(f"{path}: expected 6 channels, header says {c}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != w * h * 6:
        raise ValueError(f"{path}: truncated payload")
    return PluckerMap(body.reshape(h, w, 6).astype(np.float64))
