"""Small pose-conditioned convolutional denoiser."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .schedule import NoiseSchedule

RAY_CHANNELS = 6
COORD_CHANNELS = 2
# standardized ray maps enter scaled down: with zero-initialized weights this
# slows that per-cell pathway, whose gradients otherwise swamp the rest early on
RAY_GAIN = 0.1


def timestep_embedding(t: torch.Tensor, dim: int, max_t: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(1000.0) * torch.arange(half, dtype=torch.float32) / half)
    x = (t.float() / max_t)[:, None] * 1000.0 * freqs[None, :]
    return torch.cat([torch.sin(x), torch.cos(x)], dim=1)


def _groups(ch: int) -> int:
    for g in (8, 4, 2):
        if ch % g == 0:
            return g
    return 1


class FiLMBlock(nn.Module):
    def __init__(self, ch: int, emb_dim: int, dilation: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(ch), ch)
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=dilation, dilation=dilation)
        self.norm2 = nn.GroupNorm(_groups(ch), ch)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)
        self.film = nn.Linear(emb_dim, 2 * ch)

    def forward(self, h, emb):
        scale, shift = self.film(emb)[:, :, None, None].chunk(2, dim=1)
        x = self.conv1(F.silu(self.norm1(h)))
        x = self.norm2(x) * (1.0 + scale) + shift
        return h + self.conv2(F.silu(x))


class ToyDenoiser(nn.Module):
    """eps_hat = f(z_t, t, z_src, global pose condition, Plücker rays).

    Inputs are concatenated channel-wise with two fixed coordinate planes; a
    pooled summary of the source latent, the timestep and the global
    condition modulate every residual block.

    The network output F enters as eps_hat = sqrt(ab_t) F + sqrt(1 - ab_t) z_t,
    so the implied x0 = sqrt(ab_t) z_t - sqrt(1 - ab_t) F stays bounded at
    large t instead of amplifying eps errors by 1 / sqrt(ab_t).
    """

    def __init__(self, latent_channels: int = 4, cond_dim: int = 4, hidden: int = 32,
                 timesteps: int = 1000, emb_dim: int = 64, dilations=(1, 2, 4),
                 alpha_bars=None):
        super().__init__()
        if alpha_bars is None:
            alpha_bars = NoiseSchedule.linear(timesteps).alpha_bars
        ab = torch.tensor(np.array(alpha_bars, dtype=np.float32))
        if ab.shape != (timesteps + 1,):
            raise ValueError(f"alpha_bars must have {timesteps + 1} entries")
        self.register_buffer("sqrt_ab", ab.sqrt(), persistent=False)
        self.register_buffer("sqrt_1mab", (1.0 - ab).clamp(min=0.0).sqrt(), persistent=False)
        self.latent_channels = latent_channels
        self.cond_dim = cond_dim
        self.timesteps = timesteps
        self.emb_dim = emb_dim
        in_ch = 2 * latent_channels + RAY_CHANNELS + COORD_CHANNELS
        self.conv_in = nn.Conv2d(in_ch, hidden, 3, padding=1)
        self.src_summary = nn.Conv2d(latent_channels, emb_dim, 1)
        self.t_proj = nn.Linear(emb_dim, emb_dim)
        self.c_proj = nn.Sequential(
            nn.Linear(cond_dim, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim))
        self.emb_out = nn.Linear(emb_dim, emb_dim)
        self.blocks = nn.ModuleList(FiLMBlock(hidden, emb_dim, d) for d in dilations)
        self.norm_out = nn.GroupNorm(_groups(hidden), hidden)
        self.conv_out = nn.Conv2d(hidden, latent_channels, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)
        # pose pathways start switched off, so a conditioned model begins
        # exactly where its ablated twin does
        nn.init.zeros_(self.c_proj[-1].weight)
        nn.init.zeros_(self.c_proj[-1].bias)
        with torch.no_grad():
            lo = 2 * latent_channels
            self.conv_in.weight[:, lo:lo + RAY_CHANNELS] = 0.0
        self.register_buffer("cond_mean", torch.zeros(cond_dim))
        self.register_buffer("cond_std", torch.ones(cond_dim))
        self.register_buffer("ray_mean", torch.zeros(RAY_CHANNELS))
        self.register_buffer("ray_std", torch.ones(RAY_CHANNELS))

    @torch.no_grad()
    def set_input_stats(self, cond: torch.Tensor, rays: torch.Tensor) -> None:
        """Freeze per-feature standardization of the pose inputs.

        Constant features (including an all-zero ablated condition) keep unit
        scale, so zeros stay zeros.
        """
        def stats(x, dims):
            m, s = x.mean(dim=dims), x.std(dim=dims, unbiased=False)
            return m, torch.where(s > 1e-6, s, torch.ones_like(s))

        self.cond_mean[:], self.cond_std[:] = stats(cond.double(), (0,))
        self.ray_mean[:], self.ray_std[:] = stats(rays.double(), (0, 2, 3))

    def forward(self, z_t, t, z_src, cond, rays):
        b, _, h, w = z_t.shape
        ys = torch.linspace(-1.0, 1.0, h, dtype=z_t.dtype)
        xs = torch.linspace(-1.0, 1.0, w, dtype=z_t.dtype)
        gy, gx = torch.meshgrid(ys, xs, indexing="ij")
        coords = torch.stack([gx, gy])[None].expand(b, -1, -1, -1)
        cond = (cond - self.cond_mean) / self.cond_std
        rays = RAY_GAIN * (rays - self.ray_mean[:, None, None]) / self.ray_std[:, None, None]
        x = torch.cat([z_t, z_src, rays, coords], dim=1)
        emb = self.t_proj(timestep_embedding(t, self.emb_dim, self.timesteps))
        emb = emb + self.c_proj(cond) + self.src_summary(z_src).mean(dim=(2, 3))
        emb = self.emb_out(F.silu(emb))
        hdn = self.conv_in(x)
        for blk in self.blocks:
            hdn = blk(hdn, emb)
        out = self.conv_out(F.silu(self.norm_out(hdn)))
        return self.sqrt_ab[t][:, None, None, None] * out + self.sqrt_1mab[t][:, None, None, None] * z_t

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
