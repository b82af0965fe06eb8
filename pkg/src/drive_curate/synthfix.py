"""Synthetic cuboid scenes: point-splat renders with exact projections.

Scenes double as the geometric oracle for the pipeline and as the training
corpus of the toy denoiser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import (
    CameraModel,
    ObjectBox3D,
    OrbitalPose,
    RigidTransform,
    orbital_to_camera,
)
from .imaging import ImageBuffer, write_png_mask, write_png_rgb
from .manifest import DrivingLogManifest, FrameRecord, ObjectTrack, TrackEntry, write_manifest

BACKGROUND_RGB = (1.0, 1.0, 1.0)
NEAR_PLANE = 0.05

SYNTH_CLASS_TABLE = {0: "background", 1: "car", 2: "pedestrian", 3: "pole", 4: "vegetation", 5: "road"}
CLASS_IDS = {v: k for k, v in SYNTH_CLASS_TABLE.items()}

# Face order: +x front, -x back, +y left, -y right, +z top, -z bottom.
# Left and right share a colour so the object stays mirror-symmetric.
PALETTES = (
    ((0.85, 0.15, 0.10), (0.10, 0.20, 0.80), (0.15, 0.65, 0.20), (0.15, 0.65, 0.20),
     (0.95, 0.80, 0.10), (0.20, 0.20, 0.20)),
    ((0.10, 0.70, 0.75), (0.80, 0.45, 0.05), (0.55, 0.15, 0.60), (0.55, 0.15, 0.60),
     (0.30, 0.30, 0.30), (0.20, 0.20, 0.20)),
    ((0.95, 0.60, 0.05), (0.25, 0.55, 0.15), (0.10, 0.25, 0.55), (0.10, 0.25, 0.55),
     (0.80, 0.10, 0.25), (0.20, 0.20, 0.20)),
    ((0.30, 0.80, 0.30), (0.75, 0.10, 0.45), (0.85, 0.55, 0.10), (0.85, 0.55, 0.10),
     (0.10, 0.45, 0.70), (0.20, 0.20, 0.20)),
    ((0.60, 0.20, 0.85), (0.90, 0.85, 0.20), (0.20, 0.60, 0.60), (0.20, 0.60, 0.60),
     (0.70, 0.30, 0.15), (0.20, 0.20, 0.20)),
)
VARIANT_DIMENSIONS = (
    (4.5, 1.9, 1.5), (4.0, 1.8, 1.7), (5.2, 2.0, 1.9), (3.6, 1.7, 1.4), (4.8, 2.0, 1.6),
)


@dataclass(frozen=True)
class Occluder:
    """A sphere of points in world coordinates carrying a class label."""

    center_world: tuple[float, float, float]
    radius: float
    color: tuple[float, float, float] = (1.0, 0.0, 1.0)
    class_name: str = "pedestrian"
    instance_id: int = 100


@dataclass(frozen=True)
class SceneSpec:
    box: ObjectBox3D
    face_colors: tuple = PALETTES[0]
    density: float = 1600.0  # points per square metre of cuboid surface
    occluders: tuple[Occluder, ...] = ()
    seed: int = 0
    instance_id: int = 1
    class_name: str = "car"

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError("density must be positive")
        if len(self.face_colors) != 6:
            raise ValueError("need one colour per cuboid face")

    @property
    def spacing(self) -> float:
        return 1.0 / math.sqrt(self.density)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points_world: np.ndarray  # (N, 3)
    colors: np.ndarray  # (N, 3)
    class_ids: np.ndarray  # (N,)
    instance_ids: np.ndarray  # (N,)
    spacing: np.ndarray  # (N,) nominal point spacing in metres


@dataclass(frozen=True, eq=False)
class Render:
    image: ImageBuffer
    semantic: np.ndarray  # (H, W) class ids
    instance: np.ndarray  # (H, W) instance ids, 0 = none
    visible: np.ndarray  # indices into the point cloud
    uv: np.ndarray  # exact pinhole projections of the visible points
    depth: np.ndarray  # camera-frame z of the visible points


def _face_grid(u_len: float, v_len: float, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    nu = max(2, int(math.ceil(u_len / spacing)) + 1)
    nv = max(2, int(math.ceil(v_len / spacing)) + 1)
    a, b = np.meshgrid(np.linspace(-0.5, 0.5, nu), np.linspace(-0.5, 0.5, nv), indexing="ij")
    return a.ravel() * u_len, b.ravel() * v_len


def cuboid_points(scene: SceneSpec) -> PointCloud:
    """Regular point grid on each cuboid face, in world coordinates."""
    lx, ly, lz = scene.box.dimensions
    s = scene.spacing
    pts, cols = [], []
    # (normal axis, sign, in-plane axes)
    faces = ((0, 1, (1, 2)), (0, -1, (1, 2)), (1, 1, (0, 2)), (1, -1, (0, 2)),
             (2, 1, (0, 1)), (2, -1, (0, 1)))
    dims = (lx, ly, lz)
    for (axis, sign, (ia, ib)), color in zip(faces, scene.face_colors):
        a, b = _face_grid(dims[ia], dims[ib], s)
        p = np.zeros((a.size, 3))
        p[:, axis] = sign * dims[axis] / 2.0
        p[:, ia] = a
        p[:, ib] = b
        pts.append(p)
        cols.append(np.broadcast_to(np.asarray(color, float), p.shape))
    obj = np.concatenate(pts)
    n = obj.shape[0]
    clouds = [PointCloud(
        scene.box.to_world(obj), np.concatenate(cols),
        np.full(n, CLASS_IDS.get(scene.class_name, 1)), np.full(n, scene.instance_id),
        np.full(n, s),
    )]
    for occ in scene.occluders:
        clouds.append(_sphere_points(occ, s))
    return _concat(clouds)


def _sphere_points(occ: Occluder, spacing: float) -> PointCloud:
    area = 4.0 * math.pi * occ.radius ** 2
    n = max(64, int(area / spacing ** 2))
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5.0 ** 0.5) * i
    unit = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)
    pts = np.asarray(occ.center_world, float) + occ.radius * unit
    return PointCloud(
        pts, np.broadcast_to(np.asarray(occ.color, float), pts.shape),
        np.full(n, CLASS_IDS.get(occ.class_name, 2)), np.full(n, occ.instance_id),
        np.full(n, math.sqrt(area / n)),
    )


def _concat(clouds) -> PointCloud:
    return PointCloud(*(np.concatenate([getattr(c, f) for c in clouds]) for f in
                        ("points_world", "colors", "class_ids", "instance_ids", "spacing")))


def render_points(scene: SceneSpec, cam: RigidTransform, k: CameraModel,
                  cloud: PointCloud | None = None) -> Render:
    """Z-buffered point-splat render.

    Each point covers a square footprint sized from its projected spacing so
    surfaces render without holes; the stored ``uv`` are exact projections.
    """
    cloud = cloud if cloud is not None else cuboid_points(scene)
    w, h = k.width, k.height
    pc = cam.apply(cloud.points_world)
    z = pc[:, 2]
    front = np.flatnonzero(z > NEAR_PLANE)
    uv_all = k.project(pc[front])
    zf = z[front]
    radius = np.ceil(0.5 * max(k.fx, k.fy) * cloud.spacing[front] / zf * 1.05).astype(int)
    radius = np.clip(radius, 0, 8)
    ui = np.floor(uv_all[:, 0] + 0.5).astype(np.int64)
    vi = np.floor(uv_all[:, 1] + 0.5).astype(np.int64)

    pix_list, dep_list, idx_list = [], [], []
    for r in np.unique(radius):
        sel = np.flatnonzero(radius == r)
        offs = np.arange(-r, r + 1)
        du, dv = np.meshgrid(offs, offs, indexing="xy")
        uu = (ui[sel, None] + du.ravel()[None, :]).ravel()
        vv = (vi[sel, None] + dv.ravel()[None, :]).ravel()
        ii = np.repeat(sel, du.size)
        ok = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        pix_list.append(vv[ok] * w + uu[ok])
        dep_list.append(zf[ii[ok]])
        idx_list.append(ii[ok])

    rgb = np.broadcast_to(np.asarray(BACKGROUND_RGB), (h * w, 3)).copy()
    sem = np.zeros(h * w, dtype=np.uint8)
    inst = np.zeros(h * w, dtype=np.int32)
    zbuf = np.full(h * w, np.inf)
    if pix_list:
        pix = np.concatenate(pix_list)
        dep = np.concatenate(dep_list)
        idx = np.concatenate(idx_list)
        order = np.lexsort((idx, dep, pix))
        pix, dep, idx = pix[order], dep[order], idx[order]
        first = np.ones(pix.size, dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        wp, wi = pix[first], front[idx[first]]
        rgb[wp] = cloud.colors[wi]
        sem[wp] = cloud.class_ids[wi]
        inst[wp] = cloud.instance_ids[wi]
        zbuf[wp] = dep[first]

    # visible: point is (within tolerance) the nearest surface at its own pixel
    inb = (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
    center_pix = np.where(inb, vi * w + ui, 0)
    tol = np.maximum(0.05, 2.0 * cloud.spacing[front])
    vis = inb & (zf <= zbuf[center_pix] + tol)
    return Render(
        ImageBuffer(rgb.reshape(h, w, 3)),
        sem.reshape(h, w), inst.reshape(h, w),
        front[vis], uv_all[vis], zf[vis],
    )


def orbit_cameras(box: ObjectBox3D, poses, k: CameraModel) -> list[tuple[RigidTransform, CameraModel]]:
    return [(orbital_to_camera(p, box), k) for p in poses]


def perturb_camera(cam: RigidTransform, max_deg: float, rng: np.random.Generator) -> RigidTransform:
    """Rotate a camera about its own centre by a random pan/tilt (and small roll)."""
    pan, tilt = rng.uniform(-max_deg, max_deg, size=2)
    roll = rng.uniform(-max_deg, max_deg) * 0.25
    r = Rotation.from_euler("yxz", [pan, tilt, roll], degrees=True).as_matrix()
    rot = r @ cam.rotation
    return RigidTransform(rot, -rot @ cam.center)


def default_variants(n: int = 5, density: float = 1600.0) -> list[SceneSpec]:
    out = []
    for i in range(n):
        dims = VARIANT_DIMENSIONS[i % len(VARIANT_DIMENSIONS)]
        box = ObjectBox3D.axis_aligned((0.0, 0.0, dims[2] / 2.0), dims)
        out.append(SceneSpec(box, PALETTES[i % len(PALETTES)], density, (), seed=i))
    return out


def pose_grid(n_azimuth: int = 24, elevation_deg: float = 10.0, distance_m: float = 9.0,
              start_deg: float = 0.0, step_deg: float | None = None) -> list[OrbitalPose]:
    step = 360.0 / n_azimuth if step_deg is None else step_deg
    return [OrbitalPose.from_degrees(elevation_deg, start_deg + i * step, distance_m)
            for i in range(n_azimuth)]


DEFAULT_CAMERA = CameraModel(500.0, 500.0, 320.0, 240.0, 640, 480)


def make_toy_dataset(
    out_dir,
    variants=None,
    poses=None,
    seed: int = 0,
    camera: CameraModel = DEFAULT_CAMERA,
    max_perturb_deg: float = 6.0,
    occluder_fn=None,
) -> DrivingLogManifest:
    """Render every variant at every pose and write a manifest + PNG assets.

    Each variant becomes one object track; boxes get a seeded world placement
    and heading, and cameras a seeded pan/tilt so views are not orbital.
    ``occluder_fn(variant_index, pose_index, box, camera)`` may return
    occluders to insert in that frame.
    """
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    variants = default_variants() if variants is None else list(variants)
    poses = pose_grid() if poses is None else list(poses)
    rng = np.random.default_rng(seed)

    frames, objects = {}, {}
    t = 0.0
    for vi, spec in enumerate(variants):
        heading = Rotation.from_euler("z", rng.uniform(-180.0, 180.0), degrees=True).as_matrix()
        offset = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), 0.0])
        box = ObjectBox3D(spec.box.center_world + offset, spec.box.dimensions, heading)
        base = SceneSpec(box, spec.face_colors, spec.density, (), spec.seed,
                         spec.instance_id, spec.class_name)
        base_cloud = cuboid_points(base)
        entries = []
        for pi, pose in enumerate(poses):
            fid = f"v{vi:02d}_f{pi:04d}"
            cam = perturb_camera(orbital_to_camera(pose, box), max_perturb_deg, rng) \
                if max_perturb_deg > 0 else orbital_to_camera(pose, box)
            occs = tuple(occluder_fn(vi, pi, box, cam)) if occluder_fn else ()
            if occs:
                scene = SceneSpec(box, spec.face_colors, spec.density, occs, spec.seed,
                                  spec.instance_id, spec.class_name)
                cloud = cuboid_points(scene)
            else:
                scene, cloud = base, base_cloud
            r = render_points(scene, cam, camera, cloud=cloud)
            paths = {
                "image": out_dir / "frames" / f"{fid}.png",
                "semantic": out_dir / "frames" / f"{fid}.sem.png",
                "instance": out_dir / "frames" / f"{fid}.inst.png",
            }
            write_png_rgb(r.image, paths["image"])
            write_png_mask(r.semantic, paths["semantic"])
            write_png_mask(r.instance, paths["instance"])
            frames[fid] = FrameRecord(fid, "front", t, cam, paths["image"], paths["semantic"],
                                      paths["instance"])
            entries.append(TrackEntry(fid, spec.instance_id, box, pose))
            t += 0.1
        oid = f"veh{vi:02d}"
        objects[oid] = ObjectTrack(oid, spec.class_name, tuple(entries))

    manifest = DrivingLogManifest(
        out_dir, {"front": camera}, frames, objects, dict(SYNTH_CLASS_TABLE),
    )
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def occluder_in_front(fraction: float = 0.5, radius: float = 0.8, color=(1.0, 0.0, 1.0),
                      class_name: str = "pedestrian"):
    """Occluder factory placing a sphere on the camera-to-object line."""

    def fn(vi, pi, box: ObjectBox3D, cam: RigidTransform):
        c = cam.center + fraction * (box.center_world - cam.center)
        return (Occluder(tuple(c), radius, color, class_name, 100 + vi),)

    return fn
