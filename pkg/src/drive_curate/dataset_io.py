"""On-disk layout for curated samples and training pairs.

::

    out_dir/dataset.json                          format_version, object list, metadata
    out_dir/objects/<object_id>/<frame_id>.png        crop (8-bit RGB)
    out_dir/objects/<object_id>/<frame_id>.trimap.png (0 / 128 / 255)
    out_dir/objects/<object_id>/<frame_id>.pose.json
    out_dir/objects/<object_id>/_COMPLETE             written last per object
    out_dir/pairs.jsonl, out_dir/val_pairs.jsonl      sample references + condition

Flipped samples use the frame id suffix ``__flip``. Ray maps and latent
masks are not stored; they are recomputed from poses and trimaps on read.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .conditioning import GlobalPoseCondition, PoseMode, pair_plucker
from .curation import CuratedSample, TrainingPair, pool_mask, symmetric_counterpart
from .errors import DatasetIOError, VersionMismatch
from .geometry import CameraModel, OrbitalPose
from .occlusion import Trimap, latent_mask

DATASET_VERSION = 1
COMPLETE_MARKER = "_COMPLETE"


@dataclass
class Dataset:
    samples: list[CuratedSample]
    pairs: list[TrainingPair] = field(default_factory=list)
    val_pairs: list[TrainingPair] = field(default_factory=list)
    incomplete_objects: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def sample_index(self) -> dict:
        return {s.key: s for s in self.samples}


def sample_relpath(s: CuratedSample) -> str:
    stem = s.frame_id + ("__flip" if s.flipped else "")
    return f"objects/{s.object_id}/{stem}"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _pair_record(p: TrainingPair) -> dict:
    return {
        "format_version": DATASET_VERSION,
        "source": sample_relpath(p.source),
        "target": sample_relpath(p.target),
        "condition": {"mode": p.condition.mode.value, "values": p.condition.values.tolist()},
        "mask_pooling": "min" if p.target_mask == latent_mask(p.target.trimap) else "max",
    }


def write_samples(out_dir, samples) -> None:
    out_dir = Path(out_dir)
    by_obj: dict[str, list[CuratedSample]] = {}
    for s in samples:
        by_obj.setdefault(s.object_id, []).append(s)
    for oid, group in by_obj.items():
        odir = out_dir / "objects" / oid
        odir.mkdir(parents=True, exist_ok=True)
        for s in group:
            base = out_dir / sample_relpath(s)
            imaging.write_png_rgb(s.crop, base.with_name(base.name + ".png"))
            imaging.write_png_mask(s.trimap.labels, base.with_name(base.name + ".trimap.png"))
            pose = {
                "format_version": DATASET_VERSION,
                "object_id": s.object_id,
                "frame_id": s.frame_id,
                "flipped": s.flipped,
                "orbital": {
                    "elevation_rad": s.orbital.elevation_rad,
                    "azimuth_rad": s.orbital.azimuth_rad,
                    "distance_m": s.orbital.distance_m,
                },
                "crop_intrinsics": s.crop_intrinsics.to_dict(),
            }
            base.with_name(base.name + ".pose.json").write_text(_dump(pose) + "\n")
        (odir / COMPLETE_MARKER).write_text("ok\n")


def write_dataset(out_dir, samples, pairs=(), val_pairs=(), metadata=None) -> None:
    """Write samples per object (marker last), then the pair lists."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        object_ids = list(dict.fromkeys(s.object_id for s in samples))
        head = {"format_version": DATASET_VERSION, "objects": object_ids,
                "samples": [sample_relpath(s) for s in samples], "metadata": metadata or {}}
        (out_dir / "dataset.json").write_text(json.dumps(head, indent=1, sort_keys=True) + "\n")
        write_samples(out_dir, samples)
        for name, plist in (("pairs.jsonl", pairs), ("val_pairs.jsonl", val_pairs)):
            lines = [_dump(_pair_record(p)) for p in plist]
            (out_dir / name).write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {out_dir}: {exc}") from exc


def _check_version(doc: dict, where) -> None:
    v = doc.get("format_version")
    if v != DATASET_VERSION:
        raise VersionMismatch(f"{where}: format_version {v}, reader supports {DATASET_VERSION}")


def read_sample(out_dir, relpath: str) -> CuratedSample:
    base = Path(out_dir) / relpath
    pose = json.loads(base.with_name(base.name + ".pose.json").read_text())
    _check_version(pose, base)
    o = pose["orbital"]
    return CuratedSample(
        pose["object_id"], pose["frame_id"],
        imaging.read_png_rgb(base.with_name(base.name + ".png")),
        Trimap(imaging.read_png_mask(base.with_name(base.name + ".trimap.png"))),
        OrbitalPose(o["elevation_rad"], o["azimuth_rad"], o["distance_m"]),
        CameraModel.from_dict(pose["crop_intrinsics"]),
        bool(pose["flipped"]),
    )


def _resolve(out_dir, index: dict, relpath: str) -> CuratedSample | None:
    if relpath in index:
        return index[relpath]
    if relpath.endswith("__flip"):
        base = _resolve(out_dir, index, relpath[: -len("__flip")])
        if base is None:
            return None
        s = symmetric_counterpart(base)
        index[relpath] = s
        return s
    return None


def _read_pairs(path: Path, out_dir, index: dict) -> list[TrainingPair]:
    if not path.is_file():
        return []
    pairs = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        _check_version(rec, path)
        src = _resolve(out_dir, index, rec["source"])
        trg = _resolve(out_dir, index, rec["target"])
        if src is None or trg is None:
            continue  # references an incomplete object
        cond = GlobalPoseCondition(PoseMode(rec["condition"]["mode"]),
                                   np.asarray(rec["condition"]["values"], dtype=np.float64))
        pairs.append(TrainingPair(
            src, trg, cond,
            pair_plucker(src.orbital, trg.orbital, trg.effective_intrinsics, latent=True),
            pool_mask(trg.trimap, rec.get("mask_pooling", "min")),
        ))
    return pairs


def read_dataset(out_dir) -> Dataset:
    out_dir = Path(out_dir)
    head_path = out_dir / "dataset.json"
    try:
        head = json.loads(head_path.read_text())
    except FileNotFoundError:
        raise DatasetIOError(f"{head_path} not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f"cannot read {head_path}: {exc}") from exc
    _check_version(head, head_path)

    samples, incomplete, index = [], [], {}
    complete = {}
    for oid in head["objects"]:
        complete[oid] = (out_dir / "objects" / oid / COMPLETE_MARKER).is_file()
        if not complete[oid]:
            incomplete.append(oid)
    for rel in head.get("samples", []):
        oid = rel.split("/")[1]
        if complete.get(oid):
            s = read_sample(out_dir, rel)
            samples.append(s)
            index[rel] = s
    return Dataset(
        samples,
        _read_pairs(out_dir / "pairs.jsonl", out_dir, index),
        _read_pairs(out_dir / "val_pairs.jsonl", out_dir, index),
        incomplete,
        head.get("metadata", {}),
    )
