"""Homography warping, object-centric cropping and flipping on image buffers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegenerateBox, SingularHomography
from .geometry import CameraModel

CROP_SIZE = 256
DEFAULT_FOV_DEG = 49.1
DEFAULT_EXPAND_RATIO = 1.2
WHITE = (1.0, 1.0, 1.0)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable (height, width, channels) image.

    Three channels hold RGB floats in [0, 1]; one channel holds a
    categorical mask (any integer-valued dtype).
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, copy=True)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise ValueError(f"expected HxWx1 or HxWx3 data, got shape {a.shape}")
        if a.shape[2] == 3:
            a = a.astype(np.float64, copy=False)
            if a.size and not (a.min() >= 0.0 and a.max() <= 1.0):
                raise ValueError("RGB samples must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def is_mask(self) -> bool:
        return self.channels == 1

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.dtype == other.data.dtype and np.array_equal(self.data, other.data)

    __hash__ = None

    @classmethod
    def filled(cls, width: int, height: int, value=WHITE) -> "ImageBuffer":
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(np.broadcast_to(value, (height, width, value.size)))

    def quantized(self) -> "ImageBuffer":
        """Snap RGB samples to the 8-bit grid so PNG round trips are exact."""
        if self.is_mask:
            return self
        return ImageBuffer(np.round(self.data * 255.0) / 255.0)


@dataclass(frozen=True)
class CropResult:
    image: ImageBuffer
    intrinsics: CameraModel
    scale_factor: float
    homography: np.ndarray  # maps input pixels to crop pixels


def _sample_grid(width: int, height: int, h_inv: np.ndarray):
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    den = h_inv[2, 0] * u + h_inv[2, 1] * v + h_inv[2, 2]
    x = (h_inv[0, 0] * u + h_inv[0, 1] * v + h_inv[0, 2]) / den
    y = (h_inv[1, 0] * u + h_inv[1, 1] * v + h_inv[1, 2]) / den
    return x, y, den


def warp_image(src: ImageBuffer, h: np.ndarray, out: tuple[int, int], fill=WHITE) -> ImageBuffer:
    """Inverse-warp ``src`` by homography ``h`` (source pixels -> destination pixels).

    Destinations whose pullback lands outside the source pixel area
    ``[-0.5, W - 0.5) x [-0.5, H - 0.5)`` take ``fill``. RGB is sampled
    bilinearly (edge-clamped), masks by nearest neighbour.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3) or not np.all(np.isfinite(h)):
        raise SingularHomography("homography must be a finite 3x3 matrix")
    if np.linalg.cond(h) >= 1e12:
        raise SingularHomography(f"homography condition number {np.linalg.cond(h):.3g}")
    width, height = out
    h_inv = np.linalg.inv(h)
    x, y, den = _sample_grid(width, height, h_inv)
    sw, sh = src.width, src.height
    inside = (den > 0) & (x >= -0.5) & (x < sw - 0.5) & (y >= -0.5) & (y < sh - 0.5)
    data = src.data

    if src.is_mask:
        xi = np.clip(np.floor(x + 0.5), 0, sw - 1).astype(np.intp)
        yi = np.clip(np.floor(y + 0.5), 0, sh - 1).astype(np.intp)
        res = data[yi, xi]
        fill_arr = np.asarray(fill, dtype=data.dtype).reshape(1)
        res = np.where(inside[..., None], res, fill_arr)
        return ImageBuffer(res)

    xc = np.clip(x, 0.0, sw - 1.0)
    yc = np.clip(y, 0.0, sh - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.intp), sw - 2 if sw > 1 else 0)
    y0 = np.minimum(np.floor(yc).astype(np.intp), sh - 2 if sh > 1 else 0)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    res = top * (1.0 - fy) + bot * fy
    res = np.where(inside[..., None], res, np.asarray(fill, dtype=np.float64).reshape(1, 1, -1))
    return ImageBuffer(np.clip(res, 0.0, 1.0))


def fixed_fov_crop_camera(fov_deg: float, size: int = CROP_SIZE) -> CameraModel:
    f = (size / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return CameraModel(f, f, size / 2.0, size / 2.0, size, size)


def fixed_fov_homography(k_rotated: CameraModel, fov_deg: float, size: int = CROP_SIZE):
    """Homography and intrinsics of a fixed-FOV crop centred on the principal point."""
    if not (10.0 < fov_deg < 120.0):
        raise ValueError(f"fov_deg must lie in (10, 120), got {fov_deg}")
    k_crop = fixed_fov_crop_camera(fov_deg, size)
    return k_crop.K @ k_rotated.K_inv, k_crop


def adaptive_homography(
    k_rotated: CameraModel, bbox2d, expand_ratio: float, size: int = CROP_SIZE
):
    """Square crop of side ``expand_ratio * max(w, h)`` centred on the bbox.

    Returns ``(H, crop_intrinsics, scale_factor, (x0, y0, side))``.
    """
    x, y, w, hgt = (float(v) for v in bbox2d)
    if expand_ratio < 1.0:
        raise ValueError(f"expand_ratio must be >= 1, got {expand_ratio}")
    if max(w, hgt) < 2.0:
        raise DegenerateBox(f"bbox {bbox2d} is smaller than 2 px")
    side = expand_ratio * max(w, hgt)
    x0 = x + w / 2.0 - side / 2.0
    y0 = y + hgt / 2.0 - side / 2.0
    s = size / side
    h = np.array([[s, 0.0, -x0 * s], [0.0, s, -y0 * s], [0.0, 0.0, 1.0]])
    k_crop = CameraModel(
        k_rotated.fx * s, k_rotated.fy * s, (k_rotated.cx - x0) * s, (k_rotated.cy - y0) * s,
        size, size,
    )
    return h, k_crop, s, (x0, y0, side)


def crop_fixed_fov(
    src: ImageBuffer,
    k_rotated: CameraModel,
    fov_deg: float = DEFAULT_FOV_DEG,
    pre: np.ndarray | None = None,
    fill=WHITE,
) -> CropResult:
    """Crop with a constant focal length; object scale varies with distance.

    ``pre`` optionally maps ``src`` pixels into the ``k_rotated`` image so
    rotation and crop happen in a single resampling pass.
    """
    h, k_crop = fixed_fov_homography(k_rotated, fov_deg)
    if pre is not None:
        h = h @ pre
    img = warp_image(src, h, (CROP_SIZE, CROP_SIZE), fill)
    return CropResult(img, k_crop, k_crop.fx / k_rotated.fx, h)


def crop_adaptive(
    src: ImageBuffer,
    k_rotated: CameraModel,
    bbox2d,
    expand_ratio: float = DEFAULT_EXPAND_RATIO,
    pre: np.ndarray | None = None,
    fill=WHITE,
) -> CropResult:
    """Crop an expanded square around the 2D box; object scale stays constant."""
    h, k_crop, s, _ = adaptive_homography(k_rotated, bbox2d, expand_ratio)
    if pre is not None:
        h = h @ pre
    img = warp_image(src, h, (CROP_SIZE, CROP_SIZE), fill)
    return CropResult(img, k_crop, s, h)


def hflip(src: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(src.data[:, ::-1, :])


def hflip_intrinsics(k: CameraModel) -> CameraModel:
    return CameraModel(k.fx, k.fy, (k.width - 1) - k.cx, k.cy, k.width, k.height)


# PNG I/O: RGB as 8-bit, masks as single-channel 8-bit (16-bit for instance ids).

def read_png_rgb(path) -> ImageBuffer:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def write_png_rgb(img: ImageBuffer, path) -> None:
    if img.is_mask:
        raise ValueError("write_png_rgb expects a 3-channel image")
    arr = np.round(img.data * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(Path(path), format="PNG")


def read_png_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            return np.asarray(im, dtype=np.int64).astype(np.int32)
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_png_mask(arr: np.ndarray, path) -> None:
    arr = np.asarray(arr)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    if arr.min(initial=0) < 0:
        raise ValueError("mask values must be non-negative")
    if arr.max(initial=0) > 255:
        Image.fromarray(arr.astype(np.uint16)).save(Path(path), format="PNG")
    else:
        Image.fromarray(arr.astype(np.uint8)).save(Path(path), format="PNG")
