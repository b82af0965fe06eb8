"""Trimap occlusion masks, latent-resolution pooling and the masking operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyForeground, ShapeMismatch

# Trimap labels double as their PNG encoding.
FOREGROUND = 255
UNKNOWN = 128
BACKGROUND = 0

DEFAULT_OCCLUDER_CLASSES = (
    "car", "truck", "bus", "other large vehicle", "bicycle", "motorcycle", "trailer",
    "pedestrian", "cyclist", "motorcyclist", "bird", "ground animal",
    "construction cone pole", "pole", "pedestrian object", "sign", "traffic light",
    "vegetation",
)


_LABEL_OK = np.zeros(256, dtype=bool)
_LABEL_OK[[BACKGROUND, UNKNOWN, FOREGROUND]] = True


@dataclass(frozen=True, eq=False)
class Trimap:
    labels: np.ndarray  # (height, width) uint8 in {0, 128, 255}

    def __post_init__(self):
        a = np.array(self.labels, dtype=np.uint8)
        if a.ndim == 3 and a.shape[2] == 1:
            a = a[:, :, 0]
        if a.ndim != 2:
            raise ValueError(f"trimap must be 2-D, got {a.shape}")
        if not _LABEL_OK[a].all():
            raise ValueError("trimap labels must be 0, 128 or 255")
        a.setflags(write=False)
        object.__setattr__(self, "labels", a)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def fractions(self) -> dict:
        n = self.labels.size
        return {
            "foreground": float(np.count_nonzero(self.labels == FOREGROUND)) / n,
            "background": float(np.count_nonzero(self.labels == BACKGROUND)) / n,
            "unknown": float(np.count_nonzero(self.labels == UNKNOWN)) / n,
        }

    def valid(self) -> np.ndarray:
        return self.labels != UNKNOWN

    def __eq__(self, other):
        if not isinstance(other, Trimap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LatentMask:
    values: np.ndarray  # (h, w) float64 in {0.0, 1.0}

    def __post_init__(self):
        a = np.array(self.values, dtype=np.float64)
        if a.ndim != 2 or not np.all((a == 0.0) | (a == 1.0)):
            raise ValueError("latent mask must be a 2-D array of 0.0/1.0")
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, LatentMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def trimap_from_semantics(
    labels: np.ndarray,
    instance: np.ndarray,
    target_instance: int,
    occluders,
) -> Trimap:
    """Foreground = target instance; Unknown = other pixels of an occluder class.

    ``labels`` holds per-pixel class ids and ``occluders`` the set of ids
    treated as potential occluders.
    """
    labels = np.asarray(labels)
    instance = np.asarray(instance)
    if labels.shape != instance.shape:
        raise ShapeMismatch(f"label map {labels.shape} vs instance map {instance.shape}")
    fg = instance == target_instance
    if not fg.any():
        raise EmptyForeground(f"instance {target_instance} not present")
    occ = np.isin(labels, np.asarray(list(occluders))) & ~fg
    out = np.full(labels.shape, BACKGROUND, dtype=np.uint8)
    out[occ] = UNKNOWN
    out[fg] = FOREGROUND
    return Trimap(out)


def latent_mask(trimap: Trimap, factor: int = 8) -> LatentMask:
    """Conservative min-pool: a cell is 0 if any covered pixel is Unknown.

    Dimensions that are not multiples of ``factor`` are padded with valid
    pixels, giving ``ceil(dim / factor)`` cells.
    """
    h, w = trimap.labels.shape
    hh, ww = -(-h // factor), -(-w // factor)
    valid = np.ones((hh * factor, ww * factor), dtype=bool)
    valid[:h, :w] = trimap.valid()
    cells = valid.reshape(hh, factor, ww, factor).all(axis=(1, 3))
    return LatentMask(cells.astype(np.float64))


def apply_mask(x: np.ndarray, m: LatentMask) -> np.ndarray:
    """``x * m + (1 - m)`` with ``m`` broadcast over the leading channel axis."""
    x = np.asarray(x, dtype=np.float64)
    mv = m.values if isinstance(m, LatentMask) else np.asarray(m, dtype=np.float64)
    if x.shape[-2:] != mv.shape:
        raise ShapeMismatch(f"latent {x.shape} vs mask {mv.shape}")
    return x * mv + (1.0 - mv)
