"""Fixed linear x8 patch codec standing in for a pretrained VAE.

Each 8x8x3 patch (flattened row-major as ``(py, px, rgb)``) is projected
onto ``C`` orthonormal basis vectors. The first three are the per-channel
patch means (scaled to unit norm); any further ones come from a seeded
Gaussian draw orthogonalized against the rest. Decoding is the transpose, so
``decode(encode(x))`` is the orthogonal projection of each patch onto the
basis span and the two maps are adjoint.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..imaging import CROP_SIZE, ImageBuffer

PATCH = 8
PATCH_DIM = PATCH * PATCH * 3


def make_basis(channels: int = 4, seed: int = 0) -> np.ndarray:
    """(channels, 192) matrix with orthonormal rows."""
    if not 1 <= channels <= PATCH_DIM:
        raise ValueError(f"channels must lie in [1, {PATCH_DIM}]")
    mean_rows = np.zeros((3, PATCH * PATCH, 3))
    for c in range(3):
        mean_rows[c, :, c] = 1.0 / PATCH
    rows = mean_rows.reshape(3, PATCH_DIM)[: min(channels, 3)]
    if channels > 3:
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((channels - 3, PATCH_DIM))
        q, _ = np.linalg.qr(np.concatenate([rows, extra]).T)
        # QR may flip signs of the leading columns; keep the mean rows as given
        q = q.T
        q[:3] = rows
        rows = q
    return rows


class ToyCodec:
    def __init__(self, channels: int = 4, seed: int = 0):
        self.channels = channels
        self.basis = make_basis(channels, seed)
        self.basis.setflags(write=False)

    def encode_array(self, img: np.ndarray) -> np.ndarray:
        """(H, W, 3) array -> (C, H/8, W/8) latent."""
        img = np.asarray(img, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] % PATCH or img.shape[1] % PATCH:
            raise ShapeMismatch(f"cannot encode image of shape {img.shape}")
        h, w = img.shape[0] // PATCH, img.shape[1] // PATCH
        patches = img.reshape(h, PATCH, w, PATCH, 3).transpose(0, 2, 1, 3, 4).reshape(h, w, PATCH_DIM)
        return np.einsum("cd,hwd->chw", self.basis, patches)

    def decode_array(self, z: np.ndarray) -> np.ndarray:
        """(C, h, w) latent -> (8h, 8w, 3) array; the exact transpose of encode."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 3 or z.shape[0] != self.channels:
            raise ShapeMismatch(f"latent must be ({self.channels}, h, w), got {z.shape}")
        _, h, w = z.shape
        patches = np.einsum("cd,chw->hwd", self.basis, z)
        return patches.reshape(h, w, PATCH, PATCH, 3).transpose(0, 2, 1, 3, 4).reshape(
            h * PATCH, w * PATCH, 3)

    def encode(self, img: ImageBuffer) -> np.ndarray:
        if img.is_mask or (img.width, img.height) != (CROP_SIZE, CROP_SIZE):
            raise ShapeMismatch(f"toy codec expects a {CROP_SIZE}x{CROP_SIZE} RGB image")
        return self.encode_array(img.data)

    def decode(self, z: np.ndarray) -> ImageBuffer:
        return ImageBuffer(np.clip(self.decode_array(z), 0.0, 1.0))


_DEFAULT = ToyCodec()


def toy_encode(img: ImageBuffer, codec: ToyCodec | None = None) -> np.ndarray:
    return (codec or _DEFAULT).encode(img)


def toy_decode(z: np.ndarray, codec: ToyCodec | None = None) -> ImageBuffer:
    return (codec or _DEFAULT).decode(z)
