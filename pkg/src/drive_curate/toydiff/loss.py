"""Occlusion-masked noise-prediction loss."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ShapeMismatch
from ..occlusion import LatentMask, apply_mask


def _mask_values(m) -> np.ndarray:
    return m.values if isinstance(m, LatentMask) else np.asarray(m, dtype=np.float64)


def masked_loss(eps: np.ndarray, eps_hat: np.ndarray, m) -> float:
    """||M(eps, m) - M(eps_hat, m)||^2 with M(x, m) = x * m + (1 - m)."""
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps.shape != eps_hat.shape:
        raise ShapeMismatch(f"eps {eps.shape} vs eps_hat {eps_hat.shape}")
    diff = apply_mask(eps, m) - apply_mask(eps_hat, m)
    return float(np.sum(diff * diff))


def masked_loss_grad(eps: np.ndarray, eps_hat: np.ndarray, m) -> np.ndarray:
    """Analytic gradient of ``masked_loss`` w.r.t. ``eps_hat``: -2 m^2 (eps - eps_hat)."""
    eps = np.asarray(eps, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    mv = _mask_values(m)
    return -2.0 * mv * (apply_mask(eps, m) - apply_mask(eps_hat, m))


def masked_loss_torch(eps: torch.Tensor, eps_hat: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """Per-sample masked loss for (B, C, h, w) tensors and a (B, h, w) mask."""
    if eps.shape != eps_hat.shape or m.shape != (eps.shape[0],) + tuple(eps.shape[2:]):
        raise ShapeMismatch(f"eps {tuple(eps.shape)}, eps_hat {tuple(eps_hat.shape)}, mask {tuple(m.shape)}")
    mb = m[:, None, :, :]
    diff = (eps * mb + (1.0 - mb)) - (eps_hat * mb + (1.0 - mb))
    return (diff * diff).sum(dim=(1, 2, 3))
