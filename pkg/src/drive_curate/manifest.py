"""Driving-log manifest: JSON schema, loading and referential validation.

Layout (paths are relative to the manifest file)::

    {
      "format_version": 1,
      "class_table": [{"id": 0, "name": "background"}, {"id": 1, "name": "car"}, ...],
      "occluder_classes": ["car", "pedestrian", ...],          # optional
      "cameras": [{"id": "front", "fx": .., "fy": .., "cx": .., "cy": ..,
                   "width": .., "height": ..}],
      "frames": [{"id": "f0000", "camera": "front", "timestamp": 0.0,
                  "rotation": [[..], [..], [..]],              # world -> camera
                  "translation": [.., .., ..],
                  "image": "frames/f0000.png",
                  "semantic": "frames/f0000.sem.png",          # class ids
                  "instance": "frames/f0000.inst.png"}],       # instance ids
      "objects": [{"id": "veh0", "category": "car",
                   "track": [{"frame": "f0000", "instance_id": 1,
                              "center": [..], "dimensions": [l, w, h],
                              "heading_wxyz": [w, x, y, z],
                              "gt_orbital": [elev, azim, dist]}]}]   # optional, radians
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InconsistentTrack, InvalidPose, MissingAsset, ParseError
from .geometry import CameraModel, ObjectBox3D, OrbitalPose, RigidTransform, is_rotation
from .occlusion import DEFAULT_OCCLUDER_CLASSES

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    camera_id: str
    timestamp: float
    extrinsics: RigidTransform
    image: Path
    semantic: Path
    instance: Path


@dataclass(frozen=True)
class TrackEntry:
    frame_id: str
    instance_id: int
    box: ObjectBox3D
    gt_orbital: OrbitalPose | None = None


@dataclass(frozen=True)
class ObjectTrack:
    object_id: str
    category: str
    entries: tuple[TrackEntry, ...]


@dataclass
class DrivingLogManifest:
    root: Path
    cameras: dict[str, CameraModel]
    frames: dict[str, FrameRecord]
    objects: dict[str, ObjectTrack]
    class_table: dict[int, str]
    occluder_classes: tuple[str, ...] = DEFAULT_OCCLUDER_CLASSES

    def occluder_ids(self) -> set[int]:
        wanted = set(self.occluder_classes)
        return {cid for cid, name in self.class_table.items() if name in wanted}

    def camera_for(self, frame_id: str) -> CameraModel:
        return self.cameras[self.frames[frame_id].camera_id]

    def track_in_time_order(self, object_id: str) -> list[TrackEntry]:
        entries = self.objects[object_id].entries
        return sorted(entries, key=lambda e: (self.frames[e.frame_id].timestamp, e.frame_id))


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"{where}: missing field '{key}'")
    return d[key]


def load_manifest(path) -> DrivingLogManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError(f"{path}: file not found") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    root = path.parent
    try:
        return _build(doc, root)
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, (InconsistentTrack, InvalidPose)):
            raise InconsistentTrack(str(exc)) from None
        raise ParseError(f"{path}: {exc}") from None


def _build(doc: dict, root: Path) -> DrivingLogManifest:
    version = doc.get("format_version", MANIFEST_VERSION)
    if version != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest format_version {version}")

    class_table = {int(_req(c, "id", "class_table")): str(_req(c, "name", "class_table"))
                   for c in _req(doc, "class_table", "manifest")}
    occluders = tuple(doc.get("occluder_classes", DEFAULT_OCCLUDER_CLASSES))

    cameras = {}
    for c in _req(doc, "cameras", "manifest"):
        cid = str(_req(c, "id", "camera"))
        try:
            cameras[cid] = CameraModel.from_dict(c)
        except ValueError as exc:
            raise InconsistentTrack(f"camera {cid}: {exc}") from None

    frames = {}
    for f in _req(doc, "frames", "manifest"):
        fid = str(_req(f, "id", "frame"))
        cam = str(_req(f, "camera", f"frame {fid}"))
        if cam not in cameras:
            raise InconsistentTrack(f"frame {fid} cites unknown camera '{cam}'")
        rot = np.asarray(_req(f, "rotation", f"frame {fid}"), dtype=np.float64)
        trans = np.asarray(_req(f, "translation", f"frame {fid}"), dtype=np.float64)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ParseError(f"frame {fid}: rotation must be 3x3 and translation length 3")
        if not is_rotation(rot):
            raise InconsistentTrack(f"frame {fid}: extrinsic rotation is not orthonormal")
        if fid in frames:
            raise InconsistentTrack(f"duplicate frame id '{fid}'")
        frames[fid] = FrameRecord(
            fid, cam, float(_req(f, "timestamp", f"frame {fid}")),
            RigidTransform(rot, trans),
            root / _req(f, "image", f"frame {fid}"),
            root / _req(f, "semantic", f"frame {fid}"),
            root / _req(f, "instance", f"frame {fid}"),
        )

    objects = {}
    for o in _req(doc, "objects", "manifest"):
        oid = str(_req(o, "id", "object"))
        entries = []
        seen = set()
        for e in _req(o, "track", f"object {oid}"):
            fid = str(_req(e, "frame", f"object {oid}"))
            if fid not in frames:
                raise InconsistentTrack(f"object {oid} cites missing frame '{fid}'")
            if fid in seen:
                raise InconsistentTrack(f"object {oid} lists frame '{fid}' twice")
            seen.add(fid)
            q = np.asarray(_req(e, "heading_wxyz", f"object {oid}"), dtype=np.float64)
            if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-6:
                raise InconsistentTrack(f"object {oid} frame {fid}: heading is not a unit quaternion")
            try:
                box = ObjectBox3D.from_quaternion(
                    _req(e, "center", f"object {oid}"), _req(e, "dimensions", f"object {oid}"), q
                )
            except InvalidPose as exc:
                raise InconsistentTrack(f"object {oid} frame {fid}: {exc}") from None
            gt = e.get("gt_orbital")
            entries.append(TrackEntry(
                fid, int(_req(e, "instance_id", f"object {oid}")), box,
                OrbitalPose(*gt) if gt is not None else None,
            ))
        if not entries:
            raise InconsistentTrack(f"object {oid} has an empty track")
        if oid in objects:
            raise InconsistentTrack(f"duplicate object id '{oid}'")
        objects[oid] = ObjectTrack(oid, str(o.get("category", "car")), tuple(entries))

    missing = []
    for fr in frames.values():
        for p in (fr.image, fr.semantic, fr.instance):
            if not p.is_file():
                missing.append(p)
    if missing:
        raise MissingAsset(missing)

    return DrivingLogManifest(root, cameras, frames, objects, class_table, occluders)


def manifest_to_dict(m: DrivingLogManifest) -> dict:
    """Inverse of loading, with asset paths relative to ``m.root``."""

    def rel(p: Path) -> str:
        return Path(p).relative_to(m.root).as_posix()

    return {
        "format_version": MANIFEST_VERSION,
        "class_table": [{"id": k, "name": v} for k, v in sorted(m.class_table.items())],
        "occluder_classes": list(m.occluder_classes),
        "cameras": [{"id": cid, **cam.to_dict()} for cid, cam in m.cameras.items()],
        "frames": [
            {
                "id": f.frame_id, "camera": f.camera_id, "timestamp": f.timestamp,
                "rotation": f.extrinsics.rotation.tolist(),
                "translation": f.extrinsics.translation.tolist(),
                "image": rel(f.image), "semantic": rel(f.semantic), "instance": rel(f.instance),
            }
            for f in m.frames.values()
        ],
        "objects": [
            {
                "id": o.object_id, "category": o.category,
                "track": [
                    {
                        "frame": e.frame_id, "instance_id": e.instance_id,
                        "center": e.box.center_world.tolist(),
                        "dimensions": e.box.dimensions.tolist(),
                        "heading_wxyz": e.box.quaternion_wxyz().tolist(),
                        **({"gt_orbital": list(e.gt_orbital.as_tuple())} if e.gt_orbital else {}),
                    }
                    for e in o.entries
                ],
            }
            for o in m.objects.values()
        ],
    }


def write_manifest(m: DrivingLogManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(m), indent=1) + "\n")
