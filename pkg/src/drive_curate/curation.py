"""From manifest to canonicalized samples, symmetric counterparts and training pairs."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .conditioning import GlobalPoseCondition, PluckerMap, PoseMode, encode_global, pair_plucker
from .errors import (
    BatchTooSmall,
    CoincidentCenters,
    EmptyForeground,
    NoUsableFrames,
    PoleDegenerate,
)
from .geometry import (
    CameraModel,
    OrbitalPose,
    orbital_from_camera,
    orbital_to_camera,
    project_world,
    rotational_homography,
    virtual_rotation,
    wrap_angle,
)
from .imaging import CROP_SIZE, ImageBuffer, hflip, hflip_intrinsics
from .manifest import DrivingLogManifest
from .occlusion import (
    BACKGROUND,
    FOREGROUND,
    UNKNOWN,
    LatentMask,
    Trimap,
    latent_mask,
    trimap_from_semantics,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CuratedSample:
    object_id: str
    frame_id: str
    crop: ImageBuffer
    trimap: Trimap
    orbital: OrbitalPose
    crop_intrinsics: CameraModel  # of the unflipped crop
    flipped: bool = False

    def __post_init__(self):
        if (self.trimap.width, self.trimap.height) != (self.crop.width, self.crop.height):
            raise ValueError("trimap and crop dimensions differ")

    @property
    def key(self) -> tuple[str, str, bool]:
        return (self.object_id, self.frame_id, self.flipped)

    @property
    def effective_intrinsics(self) -> CameraModel:
        return hflip_intrinsics(self.crop_intrinsics) if self.flipped else self.crop_intrinsics

    def __eq__(self, other):
        if not isinstance(other, CuratedSample):
            return NotImplemented
        return (
            self.key == other.key
            and self.orbital == other.orbital
            and self.crop_intrinsics == other.crop_intrinsics
            and self.crop == other.crop
            and self.trimap == other.trimap
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrainingPair:
    source: CuratedSample
    target: CuratedSample
    condition: GlobalPoseCondition
    rays: PluckerMap
    target_mask: LatentMask

    def __post_init__(self):
        if self.source.object_id != self.target.object_id:
            raise ValueError("pair spans two objects")

    def __eq__(self, other):
        if not isinstance(other, TrainingPair):
            return NotImplemented
        return (
            self.source == other.source and self.target == other.target
            and self.condition == other.condition and self.rays == other.rays
            and self.target_mask == other.target_mask
        )

    __hash__ = None


# ---------------------------------------------------------------- view sampling

def sample_views(azimuths_rad, min_delta_deg: float = 3.0) -> list[int]:
    """Greedy in-order scan keeping frames at least ``min_delta_deg`` apart in azimuth."""
    azimuths = list(azimuths_rad)
    if not azimuths:
        raise ValueError("track is empty")
    kept = [0]
    last = azimuths[0]
    for i in range(1, len(azimuths)):
        gap = abs(math.degrees(wrap_angle(azimuths[i] - last)))
        if gap >= min_delta_deg - 1e-9:
            kept.append(i)
            last = azimuths[i]
    return kept


# ---------------------------------------------------------------- canonicalization

def _crop_homography(k: CameraModel, rot_h: np.ndarray, orbital_cam, box, config):
    if config.crop_strategy == "fixed_fov":
        h_crop, k_crop = imaging.fixed_fov_homography(k, config.fov_deg)
    else:
        uv = project_world(k, orbital_cam, box.corners())
        lo, hi = uv.min(axis=0), uv.max(axis=0)
        bbox = (lo[0], lo[1], hi[0] - lo[0], hi[1] - lo[1])
        h_crop, k_crop, _, _ = imaging.adaptive_homography(k, bbox, config.expand_ratio)
    return h_crop @ rot_h, k_crop


def canonicalize_frame(manifest: DrivingLogManifest, object_id: str, entry, orbital, config):
    """Warp one frame into its orbital, object-centric 256x256 crop."""
    frame = manifest.frames[entry.frame_id]
    k = manifest.cameras[frame.camera_id]
    rot = virtual_rotation(frame.extrinsics, entry.box)
    rot_h = rotational_homography(k, k, rot)
    orbital_cam = orbital_to_camera(orbital, entry.box)
    h, k_crop = _crop_homography(k, rot_h, orbital_cam, entry.box, config)

    image = imaging.read_png_rgb(frame.image)
    semantic = imaging.read_png_mask(frame.semantic)
    instance = imaging.read_png_mask(frame.instance)
    occ_ids = {cid for cid, name in manifest.class_table.items()
               if name in set(config.occluder_classes)}
    tri_src = trimap_from_semantics(semantic, instance, entry.instance_id, occ_ids)

    crop = imaging.warp_image(image, h, (CROP_SIZE, CROP_SIZE), imaging.WHITE).quantized()
    tri = imaging.warp_image(ImageBuffer(tri_src.labels), h, (CROP_SIZE, CROP_SIZE), BACKGROUND)
    trimap = Trimap(tri.data[:, :, 0])
    if not np.any(trimap.labels == FOREGROUND):
        raise EmptyForeground(f"{object_id}/{entry.frame_id}: object leaves the crop")
    return CuratedSample(object_id, entry.frame_id, crop, trimap, orbital, k_crop, False)


def curate_object(manifest: DrivingLogManifest, object_id: str, config,
                  skip_log: list | None = None) -> list[CuratedSample]:
    """Sample views every ``min_delta_deg`` of azimuth and canonicalize each.

    Frames that are pole-degenerate, lose the object, or exceed
    ``max_occlusion`` Unknown fraction are skipped and reported through
    ``skip_log`` as ``(object_id, frame_id, reason)``.
    """
    skips = skip_log if skip_log is not None else []
    entries, poses = [], []
    for e in manifest.track_in_time_order(object_id):
        try:
            poses.append(orbital_from_camera(manifest.frames[e.frame_id].extrinsics, e.box))
            entries.append(e)
        except (PoleDegenerate, CoincidentCenters) as exc:
            skips.append((object_id, e.frame_id, exc.category))
    if not entries:
        raise NoUsableFrames(f"{object_id}: every frame is degenerate")

    samples = []
    for i in sample_views([p.azimuth_rad for p in poses], config.min_delta_deg):
        e, pose = entries[i], poses[i]
        try:
            s = canonicalize_frame(manifest, object_id, e, pose, config)
        except (EmptyForeground, PoleDegenerate, CoincidentCenters) as exc:
            skips.append((object_id, e.frame_id, exc.category))
            continue
        unknown = s.trimap.fractions()["unknown"]
        if unknown > config.max_occlusion:
            skips.append((object_id, e.frame_id, f"Occluded({unknown:.3f})"))
            continue
        samples.append(s)
    for oid, fid, reason in skips:
        if oid == object_id:
            log.info("skip %s/%s: %s", oid, fid, reason)
    if not samples:
        raise NoUsableFrames(f"{object_id}: no frame survived filtering")
    return samples


def _curate_worker(args):
    manifest, object_id, config = args
    skips = []
    try:
        return object_id, curate_object(manifest, object_id, config, skips), skips, None
    except NoUsableFrames as exc:
        return object_id, [], skips, str(exc)


def curate_manifest(manifest: DrivingLogManifest, config, jobs: int = 1):
    """Curate every object; results merge in manifest order regardless of ``jobs``.

    Returns ``(samples, skips)`` where skips lists ``(object_id, frame_id, reason)``.
    """
    work = [(manifest, oid, config) for oid in manifest.objects]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_curate_worker, work))
    else:
        results = [_curate_worker(w) for w in work]
    samples, skips = [], []
    for oid, objs, obj_skips, err in results:
        samples.extend(objs)
        skips.extend(obj_skips)
        if err:
            skips.append((oid, "*", "NoUsableFrames"))
    return samples, skips


# ---------------------------------------------------------------- symmetry and pairs

def symmetric_counterpart(s: CuratedSample) -> CuratedSample:
    """Mirror the crop and trimap and negate azimuth: (a, t, z) -> (a, -t, z)."""
    pose = OrbitalPose(s.orbital.elevation_rad, -s.orbital.azimuth_rad, s.orbital.distance_m)
    return CuratedSample(
        s.object_id, s.frame_id, hflip(s.crop),
        Trimap(s.trimap.labels[:, ::-1]), pose, s.crop_intrinsics, not s.flipped,
    )


def pool_mask(trimap: Trimap, rule: str = "min") -> LatentMask:
    if rule == "min":
        return latent_mask(trimap)
    # permissive: a cell is valid if any covered pixel is valid
    inv = Trimap(np.where(trimap.labels == UNKNOWN, BACKGROUND, UNKNOWN).astype(np.uint8))
    return LatentMask(1.0 - latent_mask(inv).values)


def build_pair(src: CuratedSample, trg: CuratedSample, mode=PoseMode.RELATIVE,
               distance_scale: float = 1.0, pooling: str = "min") -> TrainingPair:
    return TrainingPair(
        src, trg,
        encode_global(src.orbital, trg.orbital, mode, distance_scale),
        pair_plucker(src.orbital, trg.orbital, trg.effective_intrinsics, latent=True),
        pool_mask(trg.trimap, pooling),
    )


def group_by_object(samples) -> dict[str, list[CuratedSample]]:
    groups: dict[str, list[CuratedSample]] = {}
    for s in samples:
        groups.setdefault(s.object_id, []).append(s)
    return groups


def make_pairs(samples, config) -> list[TrainingPair]:
    """All ordered (source, target) pairs within each object, optionally capped."""
    mode = PoseMode(config.pose_mode)
    rng = np.random.default_rng(config.seed)
    pairs = []
    for oid, group in group_by_object(samples).items():
        if len(group) == 1:
            if config.symmetry:
                s = group[0]
                pairs.append(build_pair(symmetric_counterpart(s), s, mode,
                                        config.distance_scale, config.mask_pooling))
            continue
        idx = [(i, j) for i in range(len(group)) for j in range(len(group)) if i != j]
        cap = config.max_pairs_per_object
        if cap is not None and len(idx) > cap:
            keep = np.sort(rng.choice(len(idx), size=cap, replace=False))
            idx = [idx[k] for k in keep]
        for i, j in idx:
            pairs.append(build_pair(group[i], group[j], mode, config.distance_scale,
                                    config.mask_pooling))
    return pairs


def split_holdout(samples, n_targets: int, seed: int):
    """Hold out ``n_targets`` views per object as validation targets.

    Returns ``(train_samples, val_sources_and_targets)`` where the second
    item maps object id to ``(source, [targets])``. The validation source
    stays in the training set; held-out targets do not.
    """
    rng = np.random.default_rng(seed)
    train, val = [], {}
    for oid, group in group_by_object(samples).items():
        if n_targets <= 0 or len(group) < n_targets + 2:
            train.extend(group)
            continue
        chosen = rng.choice(len(group), size=n_targets + 1, replace=False)
        src_i, trg_i = int(chosen[0]), sorted(int(c) for c in chosen[1:])
        val[oid] = (group[src_i], [group[i] for i in trg_i])
        held = set(trg_i)
        train.extend(s for i, s in enumerate(group) if i not in held)
    return train, val


def flip_source(pair: TrainingPair, distance_scale: float = 1.0,
                counterparts: dict | None = None) -> TrainingPair:
    """Replace the source by its symmetric counterpart; the target stays fixed.

    Condition and rays are recomputed from the negated source pose.
    ``counterparts`` (keyed by sample key) shares mirrored sources between pairs.
    """
    if counterparts is None:
        src = symmetric_counterpart(pair.source)
    else:
        src = counterparts.get(pair.source.key)
        if src is None:
            src = counterparts[pair.source.key] = symmetric_counterpart(pair.source)
    trg = pair.target
    return TrainingPair(
        src, trg,
        encode_global(src.orbital, trg.orbital, pair.condition.mode, distance_scale),
        pair_plucker(src.orbital, trg.orbital, trg.effective_intrinsics, latent=True),
        pair.target_mask,
    )


@dataclass
class Batch:
    pairs: list[TrainingPair]
    twin_of: list[int | None] = field(default_factory=list)  # index of the pair a twin mirrors
    untwinned: int = 0  # strong guidance with odd batch size leaves one pair alone


def compose_batch(pairs, mode: str, batch_size: int, rng_seed: int,
                  distance_scale: float = 1.0, flip_cache: dict | None = None) -> list[Batch]:
    """One epoch of batches under weak or strong symmetric guidance.

    Weak: every pair's source is flipped independently with probability 0.5.
    Strong: each base pair is followed by its source-flipped twin in the same
    batch; odd batch sizes carry one untwinned pair, recorded in ``untwinned``.
    ``flip_cache`` lets repeated epochs reuse twins and mirrored sources.
    """
    mode = mode.lower()
    if mode not in ("weak", "strong"):
        raise ValueError(f"unknown guidance mode {mode!r}")
    if batch_size < 1 or (mode == "strong" and batch_size < 2):
        raise BatchTooSmall(f"{mode} guidance needs batch_size >= {2 if mode == 'strong' else 1}")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(pairs))
    batches = []

    def flipped(k):
        if flip_cache is None:
            return flip_source(pairs[k], distance_scale)
        twins = flip_cache.setdefault("pairs", {})
        if k not in twins:
            twins[k] = flip_source(pairs[k], distance_scale, flip_cache.setdefault("samples", {}))
        return twins[k]

    if mode == "weak":
        flips = rng.random(len(pairs)) < 0.5
        for start in range(0, len(order), batch_size):
            items = []
            for k in order[start:start + batch_size]:
                items.append(flipped(k) if flips[k] else pairs[k])
            batches.append(Batch(items, [None] * len(items), 0))
        return batches

    twins, extra = batch_size // 2, batch_size % 2
    per_batch = twins + extra
    for start in range(0, len(order), per_batch):
        chunk = order[start:start + per_batch]
        items, twin_of = [], []
        for k in chunk[:twins]:
            items.append(pairs[k])
            twin_of.append(None)
            items.append(flipped(k))
            twin_of.append(len(items) - 2)
        untwinned = 0
        for k in chunk[twins:]:
            items.append(pairs[k])
            twin_of.append(None)
            untwinned += 1
        batches.append(Batch(items, twin_of, untwinned))
    return batches
