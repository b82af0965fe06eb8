"""Occlusion-aware PSNR/SSIM and azimuth-bucketed reporting.

Both metrics take a per-pixel ``valid`` mask (True where the ground truth
is trustworthy, i.e. not a potential occluder). PSNR averages squared error
over valid pixels and all channels. SSIM uses an 11x11 Gaussian window
(sigma 1.5) and keeps only windows lying fully inside the image with every
pixel valid; windows touching an invalid pixel are dropped, not
renormalized.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyValidRegion, ShapeMismatch
from .geometry import AzimuthBucket, azimuth_bucket
from .imaging import ImageBuffer

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

BUCKET_ROWS = ("All",) + tuple(b.value for b in AzimuthBucket)


def _as_array(img) -> np.ndarray:
    a = img.data if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    return a.astype(np.float64, copy=False)


def _prepare(pred, gt, valid):
    p, g = _as_array(pred), _as_array(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred {p.shape} vs gt {g.shape}")
    if valid is None:
        v = np.ones(p.shape[:2], dtype=bool)
    else:
        v = np.asarray(valid)
        if v.ndim == 3 and v.shape[2] == 1:
            v = v[:, :, 0]
        if v.shape != p.shape[:2]:
            raise ShapeMismatch(f"valid mask {v.shape} vs image {p.shape[:2]}")
        v = v.astype(bool)
    return p, g, v


def psnr(pred, gt, valid=None) -> float:
    """10 log10(1 / MSE) over valid pixels, data range [0, 1], capped at 99 dB."""
    p, g, v = _prepare(pred, gt, valid)
    if not v.any():
        raise EmptyValidRegion("no valid pixels for PSNR")
    mse = float(np.mean((p[v] - g[v]) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = (size - 1) / 2.0
    x = np.arange(size) - r
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _window_filter(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable weighted mean over every fully contained window ('valid' mode)."""
    out = ndimage.correlate1d(a, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r:a.shape[0] - r, r:a.shape[1] - r]


def ssim_map(pred, gt, valid=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-window SSIM (h', w', C) and the (h', w') mask of retained windows."""
    p, g, v = _prepare(pred, gt, valid)
    h, w = v.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise EmptyValidRegion(f"image {w}x{h} smaller than the {SSIM_WINDOW}px window")
    gw = gaussian_window()
    box = np.ones(SSIM_WINDOW)
    invalid = ndimage.correlate1d((~v).astype(np.float64), box, axis=0, mode="constant")
    invalid = ndimage.correlate1d(invalid, box, axis=1, mode="constant")
    r = SSIM_WINDOW // 2
    keep = invalid[r:h - r, r:w - r] < 0.5
    maps = []
    for c in range(p.shape[2]):
        x, y = p[:, :, c], g[:, :, c]
        mx, my = _window_filter(x, gw), _window_filter(y, gw)
        sxx = _window_filter(x * x, gw) - mx * mx
        syy = _window_filter(y * y, gw) - my * my
        sxy = _window_filter(x * y, gw) - mx * my
        num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
        den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
        maps.append(num / den)
    return np.stack(maps, axis=-1), keep


def ssim(pred, gt, valid=None) -> float:
    """Mean SSIM over retained windows, averaged over channels."""
    smap, keep = ssim_map(pred, gt, valid)
    if not keep.any():
        raise EmptyValidRegion("no fully valid SSIM window")
    return float(np.clip(np.mean(smap[keep]), -1.0, 1.0))


@dataclass(frozen=True)
class EvalRecord:
    object_id: str
    pair_id: str
    d_azimuth_deg: float
    psnr_db: float
    ssim: float
    valid_pixel_fraction: float

    def __post_init__(self):
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"ssim {self.ssim} outside [-1, 1]")
        if not 0.0 < self.valid_pixel_fraction <= 1.0:
            raise ValueError("valid_pixel_fraction must lie in (0, 1]")

    @property
    def bucket(self) -> AzimuthBucket:
        return azimuth_bucket(math.radians(self.d_azimuth_deg))


def evaluate_pair(object_id: str, pair_id: str, d_azimuth_deg: float,
                  pred, gt, valid=None) -> EvalRecord:
    p, g, v = _prepare(pred, gt, valid)
    return EvalRecord(object_id, pair_id, float(d_azimuth_deg), psnr(p, g, v), ssim(p, g, v),
                      float(v.mean()))


@dataclass(frozen=True)
class BucketRow:
    bucket: str
    count: int
    psnr_db: float | None
    ssim: float | None


@dataclass(frozen=True)
class BucketReport:
    rows: tuple[BucketRow, ...]

    def row(self, name: str) -> BucketRow:
        for r in self.rows:
            if r.bucket == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "count", "psnr_db", "ssim"])
        for r in self.rows:
            w.writerow([r.bucket, r.count,
                        "" if r.psnr_db is None else f"{r.psnr_db:.6f}",
                        "" if r.ssim is None else f"{r.ssim:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'bucket':<8} {'count':>6} {'PSNR(dB)':>10} {'SSIM':>8}"]
        for r in self.rows:
            ps = "-" if r.psnr_db is None else f"{r.psnr_db:.3f}"
            ss = "-" if r.ssim is None else f"{r.ssim:.4f}"
            lines.append(f"{r.bucket:<8} {r.count:>6} {ps:>10} {ss:>8}")
        return "\n".join(lines) + "\n"


def bucketed_report(records) -> BucketReport:
    """Mean PSNR/SSIM per azimuth bucket plus an All row; empty buckets carry None."""
    records = list(records)
    if not records:
        raise ValueError("bucketed_report needs at least one record")
    groups = {name: [] for name in BUCKET_ROWS}
    for r in records:
        groups["All"].append(r)
        groups[r.bucket.value].append(r)
    rows = []
    for name in BUCKET_ROWS:
        g = groups[name]
        if g:
            rows.append(BucketRow(name, len(g), math.fsum(r.psnr_db for r in g) / len(g),
                                  math.fsum(r.ssim for r in g) / len(g)))
        else:
            rows.append(BucketRow(name, 0, None, None))
    return BucketReport(tuple(rows))
