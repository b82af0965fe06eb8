import json
import shutil

import numpy as np
import pytest

from drive_curate.errors import InconsistentTrack, MissingAsset, ParseError
from drive_curate.manifest import load_manifest, manifest_to_dict


def _doc(tiny_synth):
    root, _ = tiny_synth
    return json.loads((root / "manifest.json").read_text())


def _write(tmp_path, tiny_synth, doc):
    root, _ = tiny_synth
    dest = tmp_path / "m"
    shutil.copytree(root, dest)
    (dest / "manifest.json").write_text(json.dumps(doc))
    return dest / "manifest.json"


def test_load_round_trip(tiny_synth):
    root, written = tiny_synth
    m = load_manifest(root / "manifest.json")
    assert set(m.objects) == {"veh00", "veh01"}
    assert len(m.frames) == 12
    assert manifest_to_dict(m) == manifest_to_dict(written)
    track = m.track_in_time_order("veh01")
    assert [e.frame_id for e in track] == sorted(e.frame_id for e in track)
    assert m.occluder_ids() >= {1, 2}


def test_gt_orbital_matches_recovered(tiny_synth):
    from drive_curate.geometry import orbital_from_camera, wrap_angle

    root, _ = tiny_synth
    m = load_manifest(root / "manifest.json")
    for oid in m.objects:
        for e in m.track_in_time_order(oid):
            p = orbital_from_camera(m.frames[e.frame_id].extrinsics, e.box)
            assert p.elevation_rad == pytest.approx(e.gt_orbital.elevation_rad, abs=1e-9)
            assert abs(wrap_angle(p.azimuth_rad - e.gt_orbital.azimuth_rad)) < 1e-9


def test_bad_json(tmp_path):
    (tmp_path / "m.json").write_text("{nope")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "m.json")
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "absent.json")


def test_missing_field(tmp_path, tiny_synth):
    doc = _doc(tiny_synth)
    del doc["frames"][0]["rotation"]
    with pytest.raises(ParseError, match="rotation"):
        load_manifest(_write(tmp_path, tiny_synth, doc))


def test_non_orthonormal_extrinsics(tmp_path, tiny_synth):
    doc = _doc(tiny_synth)
    doc["frames"][0]["rotation"][0][0] *= 1.01
    with pytest.raises(InconsistentTrack):
        load_manifest(_write(tmp_path, tiny_synth, doc))


def test_unknown_frame_and_quaternion(tmp_path, tiny_synth):
    doc = _doc(tiny_synth)
    doc["objects"][0]["track"][0]["frame"] = "nope"
    with pytest.raises(InconsistentTrack, match="missing frame"):
        load_manifest(_write(tmp_path, tiny_synth, doc))
    doc = _doc(tiny_synth)
    doc["objects"][0]["track"][0]["heading_wxyz"] = [1.0, 1.0, 0.0, 0.0]
    with pytest.raises(InconsistentTrack, match="quaternion"):
        load_manifest(_write(tmp_path / "b", tiny_synth, doc))


def test_missing_assets_listed(tmp_path, tiny_synth):
    path = _write(tmp_path, tiny_synth, _doc(tiny_synth))
    gone = sorted((path.parent / "frames").glob("*.sem.png"))[:2]
    for g in gone:
        g.unlink()
    with pytest.raises(MissingAsset) as exc:
        load_manifest(path)
    assert {p.name for p in exc.value.missing} == {g.name for g in gone}
