"""Training, evaluation and sampling loops for the toy denoiser."""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..curation import TrainingPair, compose_batch
from ..errors import DivergedLoss, VersionMismatch
from ..imaging import ImageBuffer
from .codec import ToyCodec
from .loss import masked_loss_torch
from .model import ToyDenoiser
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DCTOYCK1"
CHECKPOINT_VERSION = 1
X0_CLIP = 2.0


@dataclass(frozen=True)
class LatentNorm:
    """Affine map from codec latents to the unit-scale space the denoiser sees.

    The shift is the latent of a mid-gray image, the scale maps the [0, 8]
    range of the patch-mean channels to [-1, 1].
    """

    shift: np.ndarray
    scale: float = 0.25

    @classmethod
    def for_codec(cls, codec: ToyCodec) -> "LatentNorm":
        gray = np.full((8, 8, 3), 0.5)
        return cls(codec.encode_array(gray)[:, 0, 0], 0.25)

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (z - self.shift[:, None, None]) * self.scale

    def denormalize(self, zn: np.ndarray) -> np.ndarray:
        return zn / self.scale + self.shift[:, None, None]


@dataclass
class ToyTrainConfig:
    steps: int = 2000
    batch_size: int = 4
    learning_rate: float = 2e-5
    masked: bool = True
    pose_conditioning: bool = True
    symmetry: bool = True
    guidance: str = "strong"
    hidden: int = 32
    latent_channels: int = 4
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    seed: int = 0
    distance_scale: float = 1.0
    log_every: int = 100

    @classmethod
    def from_run_config(cls, rc, **overrides) -> "ToyTrainConfig":
        kw = dict(
            steps=rc.train_steps, batch_size=rc.batch_size, learning_rate=rc.learning_rate,
            masked=rc.masked_loss, pose_conditioning=rc.pose_conditioning,
            symmetry=rc.symmetry, guidance=rc.guidance, hidden=rc.hidden_channels,
            latent_channels=rc.latent_channels, timesteps=rc.timesteps,
            beta_start=rc.beta_start, beta_end=rc.beta_end, seed=rc.seed,
            distance_scale=rc.distance_scale,
        )
        kw.update(overrides)
        return cls(**kw)

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.linear(self.timesteps, self.beta_start, self.beta_end)


@dataclass
class TraceRow:
    step: int
    loss: float
    masked_fraction: float


@dataclass
class TrainResult:
    model: ToyDenoiser
    trace: list[TraceRow]
    config: ToyTrainConfig
    codec: ToyCodec
    norm: LatentNorm

    def trace_csv(self) -> str:
        return loss_trace_csv(self.trace)


class PairTensors:
    """Caches latents per sample and turns pairs into batched tensors."""

    def __init__(self, codec: ToyCodec, norm: LatentNorm, pose_conditioning: bool = True):
        self.codec = codec
        self.norm = norm
        self.pose_conditioning = pose_conditioning
        self._latents: dict = {}

    def latent(self, sample) -> np.ndarray:
        z = self._latents.get(sample.key)
        if z is None:
            z = self.norm.normalize(self.codec.encode(sample.crop))
            self._latents[sample.key] = z
        return z

    def batch(self, pairs) -> dict:
        z_src = np.stack([self.latent(p.source) for p in pairs])
        z_trg = np.stack([self.latent(p.target) for p in pairs])
        cond = np.stack([p.condition.values for p in pairs])
        rays = np.stack([p.rays.data.transpose(2, 0, 1) for p in pairs])
        mask = np.stack([p.target_mask.values for p in pairs])
        if not self.pose_conditioning:
            cond = np.zeros_like(cond)
            rays = np.zeros_like(rays)
        f32 = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
        return {"z_src": f32(z_src), "z_trg": f32(z_trg), "cond": f32(cond),
                "rays": f32(rays), "mask": f32(mask)}


def _epoch_batches(pairs, cfg: ToyTrainConfig, epoch: int, flip_cache: dict):
    seed = cfg.seed * 1_000_003 + epoch
    if cfg.symmetry:
        return [b.pairs for b in compose_batch(pairs, cfg.guidance, cfg.batch_size, seed,
                                               cfg.distance_scale, flip_cache)]
    order = np.random.default_rng(seed).permutation(len(pairs))
    return [[pairs[k] for k in order[s:s + cfg.batch_size]]
            for s in range(0, len(order), cfg.batch_size)]


def build_model(cfg: ToyTrainConfig, cond_dim: int) -> ToyDenoiser:
    torch.manual_seed(cfg.seed)
    return ToyDenoiser(cfg.latent_channels, cond_dim, cfg.hidden, cfg.timesteps,
                       alpha_bars=cfg.schedule().alpha_bars)


def _noise_step(model, batch, sched_ab: torch.Tensor, gen: torch.Generator, timesteps: int):
    b = batch["z_trg"].shape[0]
    t = torch.randint(1, timesteps + 1, (b,), generator=gen)
    eps = torch.randn(batch["z_trg"].shape, generator=gen)
    ab = sched_ab[t][:, None, None, None]
    z_t = ab.sqrt() * batch["z_trg"] + (1.0 - ab).sqrt() * eps
    eps_hat = model(z_t, t, batch["z_src"], batch["cond"], batch["rays"])
    return eps, eps_hat


def _batch_loss(eps, eps_hat, mask, masked: bool) -> torch.Tensor:
    m = mask if masked else torch.ones_like(mask)
    return masked_loss_torch(eps, eps_hat, m).mean()


def train_toy(pairs, cfg: ToyTrainConfig, codec: ToyCodec | None = None) -> TrainResult:
    """Plain fixed-step SGD on the (optionally) occlusion-masked loss.

    The objective per step is the batch mean of the per-sample masked
    squared norm. Deterministic for a fixed ``cfg.seed``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("training needs at least one pair")
    torch.use_deterministic_algorithms(True)
    codec = codec or ToyCodec(cfg.latent_channels)
    norm = LatentNorm.for_codec(codec)
    tensors = PairTensors(codec, norm, cfg.pose_conditioning)
    model = build_model(cfg, pairs[0].condition.values.size)
    stats = tensors.batch(pairs[::max(1, len(pairs) // 256)])
    model.set_input_stats(stats["cond"], stats["rays"])
    sched_ab = torch.from_numpy(cfg.schedule().alpha_bars.astype(np.float32))
    gen = torch.Generator().manual_seed(cfg.seed)
    params = list(model.parameters())

    trace: list[TraceRow] = []
    flip_cache: dict = {}
    step, epoch = 0, 0
    while step < cfg.steps:
        for items in _epoch_batches(pairs, cfg, epoch, flip_cache):
            if step >= cfg.steps:
                break
            batch = tensors.batch(items)
            eps, eps_hat = _noise_step(model, batch, sched_ab, gen, cfg.timesteps)
            loss = _batch_loss(eps, eps_hat, batch["mask"], cfg.masked)
            value = float(loss.detach())
            if not np.isfinite(value):
                raise DivergedLoss(f"loss became {value} at step {step}")
            model.zero_grad(set_to_none=False)
            loss.backward()
            if cfg.learning_rate != 0.0:
                with torch.no_grad():
                    for p in params:
                        p.sub_(cfg.learning_rate * p.grad)
            masked_frac = float(1.0 - batch["mask"].mean()) if cfg.masked else 0.0
            trace.append(TraceRow(step, value, masked_frac))
            if cfg.log_every and step % cfg.log_every == 0:
                log.debug("step %d loss %.5f", step, value)
            step += 1
        epoch += 1
    return TrainResult(model, trace, cfg, codec, norm)


@torch.no_grad()
def evaluate_loss(result: TrainResult, pairs, seed: int = 12345, draws: int = 4,
                  masked: bool = True, batch_size: int = 32) -> float:
    """Mean per-sample masked loss over fixed (t, eps) draws, identical across models."""
    tensors = PairTensors(result.codec, result.norm, result.config.pose_conditioning)
    sched_ab = torch.from_numpy(result.config.schedule().alpha_bars.astype(np.float32))
    gen = torch.Generator().manual_seed(seed)
    model = result.model.eval()
    total, count = 0.0, 0
    pairs = list(pairs)
    for _ in range(draws):
        for s in range(0, len(pairs), batch_size):
            batch = tensors.batch(pairs[s:s + batch_size])
            eps, eps_hat = _noise_step(model, batch, sched_ab, gen, result.config.timesteps)
            m = batch["mask"] if masked else torch.ones_like(batch["mask"])
            per = masked_loss_torch(eps.double(), eps_hat.double(), m.double())
            total += float(per.sum())
            count += per.numel()
    model.train()
    return total / count


@torch.no_grad()
def sample_view(model: ToyDenoiser, z_src: np.ndarray, condition: np.ndarray, rays: np.ndarray,
                sched: NoiseSchedule, steps: int, seed: int) -> np.ndarray:
    """Deterministic DDIM (eta = 0) sampling in normalized latent space.

    ``z_src`` is (C, h, w), ``condition`` the global pose vector, ``rays``
    (h, w, 6). ``steps = 0`` returns the seeded starting noise.
    """
    if not 0 <= steps <= sched.steps:
        raise ValueError(f"steps must lie in [0, {sched.steps}]")
    gen = torch.Generator().manual_seed(seed)
    shape = (1,) + tuple(np.shape(z_src))
    z = torch.randn(shape, generator=gen)
    if steps == 0:
        return z[0].numpy().astype(np.float64)
    ab = sched.alpha_bars
    ts = np.unique(np.round(np.linspace(sched.steps, 1, steps)).astype(int))[::-1]
    src = torch.from_numpy(np.asarray(z_src, dtype=np.float32))[None]
    cond = torch.from_numpy(np.asarray(condition, dtype=np.float32))[None]
    ray = torch.from_numpy(np.ascontiguousarray(np.asarray(rays).transpose(2, 0, 1), dtype=np.float32))[None]
    was_training = model.training
    model.eval()
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        a_t, a_prev = float(ab[t]), float(ab[t_prev])
        eps = model(z, torch.tensor([int(t)]), src, cond, ray)
        x0 = ((z - (1.0 - a_t) ** 0.5 * eps) / a_t ** 0.5).clamp(-X0_CLIP, X0_CLIP)
        z = a_prev ** 0.5 * x0 + (1.0 - a_prev) ** 0.5 * eps
    model.train(was_training)
    return z[0].numpy().astype(np.float64)


def predict_image(result: TrainResult, pair: TrainingPair, steps: int, seed: int) -> ImageBuffer:
    """Sample the target view of ``pair`` and decode it to pixels."""
    tensors = PairTensors(result.codec, result.norm, result.config.pose_conditioning)
    cond = pair.condition.values if result.config.pose_conditioning else np.zeros_like(pair.condition.values)
    rays = pair.rays.data if result.config.pose_conditioning else np.zeros_like(pair.rays.data)
    zn = sample_view(result.model, tensors.latent(pair.source), cond, rays,
                     result.config.schedule(), steps, seed)
    return result.codec.decode(result.norm.denormalize(zn))


# ---------------------------------------------------------------- persistence

def loss_trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "masked_fraction"])
    for r in trace:
        w.writerow([r.step, repr(r.loss), repr(r.masked_fraction)])
    return buf.getvalue()


def save_checkpoint(result: TrainResult, path) -> None:
    """Magic, uint32 header length, JSON header (config + tensor shapes), raw float32 LE."""
    state = result.model.state_dict()
    tensors = [(k, v.detach().cpu().numpy().astype("<f4")) for k, v in state.items()]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": result.config.__dict__,
        "cond_dim": result.model.cond_dim,
        "codec": {"channels": result.codec.channels},
        "tensors": [{"name": k, "shape": list(a.shape)} for k, a in tensors],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for _, a in tensors:
            fh.write(a.tobytes())


def load_checkpoint(path) -> TrainResult:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise VersionMismatch(f"{path}: not a toy checkpoint")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12:12 + hlen])
    if header["format_version"] != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {header['format_version']}")
    cfg = ToyTrainConfig(**header["config"])
    model = ToyDenoiser(cfg.latent_channels, header["cond_dim"], cfg.hidden, cfg.timesteps,
                        alpha_bars=cfg.schedule().alpha_bars)
    offset = 12 + hlen
    state = {}
    for spec in header["tensors"]:
        n = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(spec["shape"])
        state[spec["name"]] = torch.from_numpy(arr.astype(np.float32))
        offset += 4 * n
    model.load_state_dict(state)
    codec = ToyCodec(header["codec"]["channels"])
    return TrainResult(model, [], cfg, codec, LatentNorm.for_codec(codec))
