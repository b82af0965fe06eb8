"""Command-line entry point: ``drive-curate <command> [flags]``.

Every artifact lands under ``--out``::

    out/synth/      manifest.json + rendered frames          (synth)
    out/dataset/    curated crops, trimaps, poses, pair lists (curate)
    out/embed/      Plücker maps and pose condition table     (embed)
    out/model/      checkpoint, loss trace, loss curve        (train-toy)
    out/eval/       per-pair records, bucket report, figures  (eval)
    out/logs/       JSON-lines logs (the only timestamped files)

Failures print one line ``error: <Category>: <message>`` to stderr and exit
with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .conditioning import write_pluecker
from .config import RunConfig, load_config
from .curation import curate_manifest, make_pairs, split_holdout, build_pair
from .dataset_io import read_dataset, sample_relpath, write_dataset
from .errors import DriveCurateError, ConfigError, NoUsableFrames
from .evalmetrics import bucketed_report, evaluate_pair
from .geometry import OrbitalPose, relative_orbital
from .imaging import write_png_rgb
from .manifest import load_manifest
from .occlusion import UNKNOWN

log = logging.getLogger("drive_curate")

LOG_ENV = "DRIVE_CURATE_LOG"


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        doc = {"ts": round(record.created, 3), "level": record.levelname,
               "logger": record.name, "msg": record.getMessage()}
        extra = getattr(record, "fields", None)
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True)


def setup_logging(out: Path, command: str) -> None:
    level = os.environ.get(LOG_ENV, "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "INFO"
    root = logging.getLogger("drive_curate")
    root.setLevel(level)
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    (out / "logs").mkdir(parents=True, exist_ok=True)
    fh = logging.FileHandler(out / "logs" / f"{command}.jsonl", mode="w")
    fh.setFormatter(JsonLineFormatter())
    root.addHandler(fh)
    err = logging.StreamHandler(sys.stderr)
    err.setLevel(max(logging.WARNING, logging.getLevelName(level)))
    err.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root.addHandler(err)
    root.propagate = False


def _event(msg: str, **fields) -> None:
    log.info(msg, extra={"fields": fields})


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg: RunConfig, out: Path) -> int:
    from .synthfix import default_variants, make_toy_dataset, occluder_in_front, pose_grid

    n_poses = cfg.synth_poses
    step = None
    if args.ring_step is not None:
        n_poses = int(round(360.0 / args.ring_step))
        step = args.ring_step
    variants = default_variants(cfg.synth_variants, cfg.synth_density)
    poses = pose_grid(n_poses, cfg.synth_elevation_deg, cfg.synth_distance_m, step_deg=step)
    occ = occluder_in_front(args.occluder) if args.occluder is not None else None
    dest = out / "synth"
    m = make_toy_dataset(dest, variants, poses, seed=cfg.seed,
                         max_perturb_deg=cfg.synth_perturb_deg, occluder_fn=occ)
    _event("synth done", frames=len(m.frames), objects=len(m.objects))
    print(f"wrote {len(m.frames)} frames for {len(m.objects)} objects to {dest / 'manifest.json'}")
    return 0


def cmd_curate(args, cfg: RunConfig, out: Path) -> int:
    manifest_path = Path(args.manifest) if args.manifest else out / "synth" / "manifest.json"
    manifest = load_manifest(manifest_path)
    samples, skips = curate_manifest(manifest, cfg, jobs=cfg.jobs)
    for oid, fid, reason in skips:
        log.info("skip", extra={"fields": {"object_id": oid, "frame_id": fid, "reason": reason}})
    if not samples:
        raise NoUsableFrames("no object produced a usable frame")
    train, val = split_holdout(samples, cfg.val_targets_per_object, cfg.seed)
    pairs = make_pairs(train, cfg)
    val_pairs = [build_pair(src, trg, cfg.pose_mode, cfg.distance_scale, cfg.mask_pooling)
                 for src, targets in val.values() for trg in targets]
    settings = {k: v for k, v in cfg.to_dict().items() if k != "jobs"}
    meta = {"config": settings, "skips": [list(s) for s in skips],
            "val_sources": {oid: sample_relpath(s) for oid, (s, _) in val.items()}}
    dest = out / "dataset"
    write_dataset(dest, samples, pairs, val_pairs, meta)
    _event("curate done", samples=len(samples), pairs=len(pairs), val_pairs=len(val_pairs),
           skipped=len(skips))
    print(f"curated {len(samples)} samples ({len(skips)} skipped), "
          f"{len(pairs)} training pairs, {len(val_pairs)} validation pairs -> {dest}")
    return 0


def _dataset(args, out: Path):
    return read_dataset(Path(args.dataset) if getattr(args, "dataset", None) else out / "dataset")


def cmd_embed(args, cfg: RunConfig, out: Path) -> int:
    ds = _dataset(args, out)
    dest = out / "embed"
    (dest / "rays").mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair", "split", "source", "target", "mode", "condition"])
    n = 0
    for split, plist in (("train", ds.pairs), ("val", ds.val_pairs)):
        for i, p in enumerate(plist):
            name = f"{split}_{i:06d}"
            write_pluecker(p.rays, dest / "rays" / f"{name}.pluecker")
            w.writerow([name, split, sample_relpath(p.source), sample_relpath(p.target),
                        p.condition.mode.value, " ".join(repr(float(v)) for v in p.condition.values)])
            n += 1
    (dest / "conditions.csv").write_text(buf.getvalue())
    _event("embed done", pairs=n)
    print(f"wrote {n} ray maps and conditions to {dest}")
    return 0


def cmd_train_toy(args, cfg: RunConfig, out: Path) -> int:
    from .plotting import plot_loss_curve
    from .toydiff import ToyTrainConfig, save_checkpoint, train_toy

    ds = _dataset(args, out)
    if not ds.pairs:
        raise NoUsableFrames("dataset has no training pairs")
    tcfg = ToyTrainConfig.from_run_config(cfg)
    t0 = time.perf_counter()
    result = train_toy(ds.pairs, tcfg)
    dest = out / "model"
    dest.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result, dest / "checkpoint.bin")
    (dest / "loss_trace.csv").write_text(result.trace_csv())
    plot_loss_curve([r.step for r in result.trace], [r.loss for r in result.trace],
                    dest / "loss_curve.png")
    last = result.trace[-1].loss if result.trace else float("nan")
    _event("train done", steps=len(result.trace), final_loss=last,
           seconds=round(time.perf_counter() - t0, 2))
    print(f"trained {len(result.trace)} steps on {len(ds.pairs)} pairs, final loss {last:.4f} -> {dest}")
    return 0


def cmd_eval(args, cfg: RunConfig, out: Path) -> int:
    from .plotting import plot_bucket_report, plot_examples
    from .toydiff import load_checkpoint, predict_image

    ds = _dataset(args, out)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model" / "checkpoint.bin"
    result = load_checkpoint(ckpt)
    pairs = ds.val_pairs or ds.pairs
    if args.limit:
        pairs = pairs[: args.limit]
    if not pairs:
        raise NoUsableFrames("no pairs to evaluate")
    dest = out / "eval"
    (dest / "predictions").mkdir(parents=True, exist_ok=True)
    records, examples = [], []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object_id", "pair_id", "d_azimuth_deg", "psnr_db", "ssim", "valid_pixel_fraction"])
    for i, p in enumerate(pairs):
        pred = predict_image(result, p, cfg.sample_steps, cfg.seed + i)
        valid = p.target.trimap.labels != UNKNOWN
        d_az = np.degrees(relative_orbital(p.source.orbital, p.target.orbital).d_azimuth_rad)
        pid = f"{i:05d}"
        rec = evaluate_pair(p.target.object_id, pid, float(d_az), pred, p.target.crop, valid)
        records.append(rec)
        write_png_rgb(pred, dest / "predictions" / f"{pid}.png")
        w.writerow([rec.object_id, rec.pair_id, f"{rec.d_azimuth_deg:.6f}", f"{rec.psnr_db:.6f}",
                    f"{rec.ssim:.6f}", f"{rec.valid_pixel_fraction:.6f}"])
        if len(examples) < 4:
            examples.append([p.source.crop, pred, p.target.crop])
    report = bucketed_report(records)
    (dest / "records.csv").write_text(buf.getvalue())
    (dest / "report.csv").write_text(report.to_csv())
    plot_bucket_report(report, dest / "buckets.png")
    plot_examples(examples, dest / "examples.png")
    _event("eval done", pairs=len(records))
    sys.stdout.write(report.to_text())
    return 0


def cmd_inspect(args, cfg: RunConfig, out: Path) -> int:
    ds = _dataset(args, out)
    if args.pair is not None:
        plist = ds.val_pairs if args.split == "val" else ds.pairs
        if not 0 <= args.pair < len(plist):
            raise IndexError(f"pair index {args.pair} out of range (0..{len(plist) - 1})")
        p = plist[args.pair]
        rel = relative_orbital(p.source.orbital, p.target.orbital)
        print(f"pair {args.split}[{args.pair}]")
        print(f"  source   {sample_relpath(p.source)}  {_pose_str(p.source.orbital)}")
        print(f"  target   {sample_relpath(p.target)}  {_pose_str(p.target.orbital)}")
        print(f"  delta    elev {np.degrees(rel.d_elevation_rad):.3f} deg  "
              f"azim {np.degrees(rel.d_azimuth_rad):.3f} deg  dist {rel.d_distance_m:.3f} m")
        print(f"  condition[{p.condition.mode.value}] "
              + " ".join(f"{v:.6f}" for v in p.condition.values))
        print(f"  latent mask valid fraction {float(p.target_mask.values.mean()):.4f}")
        _print_trimap(p.target.trimap)
        return 0
    samples = ds.samples
    if args.sample:
        samples = [s for s in samples if sample_relpath(s).endswith(args.sample)]
        if not samples:
            raise KeyError(f"no sample matches {args.sample!r}")
    for s in samples[: args.limit or len(samples)]:
        print(f"{sample_relpath(s)}  {_pose_str(s.orbital)}")
        _print_trimap(s.trimap)
    return 0


def _pose_str(p: OrbitalPose) -> str:
    a, t, z = p.degrees()
    return f"elev {a:.3f} deg  azim {t:.3f} deg  dist {z:.3f} m"


def _print_trimap(trimap) -> None:
    f = trimap.fractions()
    print("  trimap   " + "  ".join(f"{k} {v:.4f}" for k, v in f.items()))


# ---------------------------------------------------------------- parser

def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file (flags override its values)")
    p.add_argument("--out", default=d, help="output root (default: ./out)")
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--jobs", type=int, default=d, help="worker processes (default: cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drive-curate",
        description="Object-centric view curation and toy novel-view diffusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        _global_flags(sp, suppress=True)
        return sp

    sp = add("synth", "render a synthetic driving log of face-colored cuboids")
    sp.add_argument("--ring-step", type=float, help="azimuth step in degrees (full ring)")
    sp.add_argument("--occluder", type=float, metavar="FRACTION",
                    help="insert a sphere at this fraction of the camera-object line")

    sp = add("curate", "canonicalize a driving-log manifest into crops and pairs")
    sp.add_argument("--manifest", help="manifest JSON (default: OUT/synth/manifest.json)")

    sp = add("embed", "write Plücker maps and pose conditions for every pair")
    sp.add_argument("--dataset", help="dataset dir (default: OUT/dataset)")

    sp = add("train-toy", "train the toy latent denoiser")
    sp.add_argument("--dataset", help="dataset dir (default: OUT/dataset)")

    sp = add("eval", "sample held-out views and write the bucketed report")
    sp.add_argument("--dataset", help="dataset dir (default: OUT/dataset)")
    sp.add_argument("--checkpoint", help="checkpoint (default: OUT/model/checkpoint.bin)")
    sp.add_argument("--limit", type=int, help="evaluate at most this many pairs")

    sp = add("inspect", "print poses, mask statistics and condition vectors")
    sp.add_argument("--dataset", help="dataset dir (default: OUT/dataset)")
    sp.add_argument("--sample", help="relpath suffix of a sample, e.g. veh00/v00_f0003")
    sp.add_argument("--pair", type=int, help="pair index")
    sp.add_argument("--split", choices=("train", "val"), default="train")
    sp.add_argument("--limit", type=int, help="print at most this many samples")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "curate": cmd_curate,
    "embed": cmd_embed,
    "train-toy": cmd_train_toy,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config, seed=args.seed, jobs=args.jobs)
    if args.jobs is None and not _file_sets(args.config, "jobs"):
        cfg = cfg.replace(jobs=os.cpu_count() or 1)
    return cfg


def _file_sets(path, key: str) -> bool:
    if path is None:
        return False
    return key in json.loads(Path(path).read_text())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "out", "seed", "jobs"):
        if not hasattr(args, name):
            setattr(args, name, None)
    out = Path(args.out or "out")
    try:
        cfg = resolve_config(args)
        setup_logging(out, args.command)
        _event("start", command=args.command, argv=list(sys.argv[1:] if argv is None else argv))
        return COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"error: ConfigError: {'; '.join(exc.problems)}", file=sys.stderr)
        return 1
    except DriveCurateError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, IndexError, ValueError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
