"""Run configuration: a flat JSON key-value document plus CLI overrides.

Example::

    {"crop_strategy": "fixed_fov", "fov_deg": 49.1, "pose_mode": "relative",
     "guidance": "strong", "min_delta_deg": 3.0, "seed": 7}

Unknown keys are rejected. Validation reports every violated field at once.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .occlusion import DEFAULT_OCCLUDER_CLASSES


@dataclass
class RunConfig:
    # curation
    crop_strategy: str = "fixed_fov"  # fixed_fov | adaptive
    fov_deg: float = 49.1
    expand_ratio: float = 1.2
    min_delta_deg: float = 3.0
    max_occlusion: float = 0.8
    mask_pooling: str = "min"  # min (conservative) | max (permissive)
    occluder_classes: list = field(default_factory=lambda: list(DEFAULT_OCCLUDER_CLASSES))
    val_targets_per_object: int = 5
    max_pairs_per_object: int | None = None

    # conditioning
    pose_mode: str = "relative"  # relative | absolute
    distance_scale: float = 1.0

    # symmetric prior
    symmetry: bool = True
    guidance: str = "strong"  # weak | strong

    # toy diffusion
    latent_channels: int = 4
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    timestep_sampling: str = "uniform"
    hidden_channels: int = 32
    train_steps: int = 2000
    batch_size: int = 4
    learning_rate: float = 2e-5  # loss is a sum over latent cells
    masked_loss: bool = True
    pose_conditioning: bool = True
    sample_steps: int = 50

    # synthetic data
    synth_variants: int = 5
    synth_poses: int = 24
    synth_elevation_deg: float = 10.0
    synth_distance_m: float = 9.0
    synth_density: float = 1600.0
    synth_perturb_deg: float = 6.0

    seed: int = 0
    jobs: int = 1

    def validate(self) -> "RunConfig":
        problems = []

        def need(cond, name, msg):
            if not cond:
                problems.append(f"{name}: {msg} (got {getattr(self, name)!r})")

        need(self.crop_strategy in ("fixed_fov", "adaptive"), "crop_strategy",
             "must be fixed_fov or adaptive")
        need(_num(self.fov_deg) and 10.0 < self.fov_deg < 120.0, "fov_deg", "must lie in (10, 120)")
        need(_num(self.expand_ratio) and self.expand_ratio >= 1.0, "expand_ratio", "must be >= 1")
        need(_num(self.min_delta_deg) and 0.0 <= self.min_delta_deg < 180.0, "min_delta_deg",
             "must lie in [0, 180)")
        need(_num(self.max_occlusion) and 0.0 <= self.max_occlusion <= 1.0, "max_occlusion",
             "must lie in [0, 1]")
        need(self.mask_pooling in ("min", "max"), "mask_pooling", "must be min or max")
        need(isinstance(self.occluder_classes, list)
             and all(isinstance(c, str) for c in self.occluder_classes),
             "occluder_classes", "must be a list of class names")
        need(_int(self.val_targets_per_object) and self.val_targets_per_object >= 0,
             "val_targets_per_object", "must be a non-negative integer")
        need(self.max_pairs_per_object is None
             or (_int(self.max_pairs_per_object) and self.max_pairs_per_object > 0),
             "max_pairs_per_object", "must be null or a positive integer")
        need(self.pose_mode in ("relative", "absolute"), "pose_mode", "must be relative or absolute")
        need(_num(self.distance_scale) and self.distance_scale > 0, "distance_scale", "must be > 0")
        need(isinstance(self.symmetry, bool), "symmetry", "must be a boolean")
        need(self.guidance in ("weak", "strong"), "guidance", "must be weak or strong")
        need(_int(self.latent_channels) and 1 <= self.latent_channels <= 192, "latent_channels",
             "must lie in [1, 192]")
        need(_int(self.timesteps) and self.timesteps >= 1, "timesteps", "must be >= 1")
        need(_num(self.beta_start) and _num(self.beta_end)
             and 0.0 < self.beta_start <= self.beta_end < 1.0, "beta_start",
             "need 0 < beta_start <= beta_end < 1")
        need(self.timestep_sampling == "uniform", "timestep_sampling", "only uniform is supported")
        need(_int(self.hidden_channels) and self.hidden_channels >= 4, "hidden_channels", "must be >= 4")
        need(_int(self.train_steps) and self.train_steps >= 0, "train_steps", "must be >= 0")
        need(_int(self.batch_size) and self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.guidance != "strong" or not self.symmetry or
             (_int(self.batch_size) and self.batch_size >= 2),
             "batch_size", "strong guidance needs batch_size >= 2")
        need(_num(self.learning_rate) and self.learning_rate >= 0, "learning_rate", "must be >= 0")
        need(isinstance(self.masked_loss, bool), "masked_loss", "must be a boolean")
        need(isinstance(self.pose_conditioning, bool), "pose_conditioning", "must be a boolean")
        need(_int(self.sample_steps) and 0 <= self.sample_steps <= (self.timesteps if _int(self.timesteps) else 0),
             "sample_steps", "must lie in [0, timesteps]")
        need(_int(self.synth_variants) and self.synth_variants >= 1, "synth_variants", "must be >= 1")
        need(_int(self.synth_poses) and self.synth_poses >= 1, "synth_poses", "must be >= 1")
        need(_num(self.synth_elevation_deg) and abs(self.synth_elevation_deg) < 89.0,
             "synth_elevation_deg", "must lie in (-89, 89)")
        need(_num(self.synth_distance_m) and self.synth_distance_m > 0, "synth_distance_m", "must be > 0")
        need(_num(self.synth_density) and self.synth_density > 0, "synth_density", "must be > 0")
        need(_num(self.synth_perturb_deg) and 0 <= self.synth_perturb_deg <= 20,
             "synth_perturb_deg", "must lie in [0, 20]")
        need(_int(self.seed) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(_int(self.jobs) and self.jobs >= 1, "jobs", "must be >= 1")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError([f"{k}: unknown key" for k in unknown])
        return cls(**d).validate()

    def replace(self, **overrides) -> "RunConfig":
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(merged)


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def load_config(path=None, **overrides) -> RunConfig:
    """Config file (if any) with ``overrides`` applied on top; flags win."""
    base = {}
    if path is not None:
        try:
            base = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"config: cannot read {path}: {exc}"]) from None
        if not isinstance(base, dict):
            raise ConfigError(["config: top level must be an object"])
    base.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(base)
