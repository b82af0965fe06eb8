import json

import pytest

from drive_curate.config import RunConfig
from drive_curate.curation import build_pair, flip_source, make_pairs
from drive_curate.dataset_io import COMPLETE_MARKER, read_dataset, write_dataset
from drive_curate.errors import DatasetIOError, VersionMismatch


@pytest.fixture
def written(tmp_path, tiny_curated):
    samples = tiny_curated[0]
    pairs = make_pairs(samples, RunConfig())[:5]
    pairs.append(flip_source(pairs[0]))
    val = [build_pair(samples[0], samples[1], pooling="max")]
    write_dataset(tmp_path / "ds", samples, pairs, val, {"note": "x"})
    return tmp_path / "ds", samples, pairs, val


def test_round_trip(written):
    root, samples, pairs, val = written
    ds = read_dataset(root)
    assert ds.incomplete_objects == []
    assert ds.metadata == {"note": "x"}
    assert len(ds.samples) == len(samples)
    assert all(a == b for a, b in zip(ds.samples, samples))
    assert len(ds.pairs) == len(pairs)
    assert all(a == b for a, b in zip(ds.pairs, pairs))
    assert ds.val_pairs[0] == val[0]


def test_incomplete_object_skipped(written):
    root, samples, _, _ = written
    oid = samples[0].object_id
    (root / "objects" / oid / COMPLETE_MARKER).unlink()
    ds = read_dataset(root)
    assert ds.incomplete_objects == [oid]
    assert all(s.object_id != oid for s in ds.samples)
    assert all(p.source.object_id != oid for p in ds.pairs)


def test_version_mismatch(written):
    root = written[0]
    head = json.loads((root / "dataset.json").read_text())
    head["format_version"] = 99
    (root / "dataset.json").write_text(json.dumps(head))
    with pytest.raises(VersionMismatch):
        read_dataset(root)


def test_missing_dataset(tmp_path):
    with pytest.raises(DatasetIOError):
        read_dataset(tmp_path / "nothing")


def test_unwritable(tmp_path, tiny_curated):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(DatasetIOError):
        write_dataset(blocker / "ds", tiny_curated[0][:1])


def test_bytewise_deterministic(tmp_path, tiny_curated):
    samples = tiny_curated[0]
    pairs = make_pairs(samples, RunConfig())[:4]
    for name in ("a", "b"):
        write_dataset(tmp_path / name, samples, pairs)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
