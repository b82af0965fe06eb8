import json

import pytest

from drive_curate.config import RunConfig, load_config
from drive_curate.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.fov_deg == 49.1 and cfg.min_delta_deg == 3.0 and cfg.guidance == "strong"


def test_json_round_trip(tmp_path):
    cfg = RunConfig(seed=9, crop_strategy="adaptive")
    (tmp_path / "c.json").write_text(cfg.to_json())
    assert load_config(tmp_path / "c.json") == cfg


def test_flags_override_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 3, "min_delta_deg": 5.0}))
    cfg = load_config(tmp_path / "c.json", seed=11, jobs=None)
    assert cfg.seed == 11 and cfg.min_delta_deg == 5.0 and cfg.jobs == 1


def test_every_problem_reported():
    with pytest.raises(ConfigError) as exc:
        RunConfig(fov_deg=200.0, guidance="medium", max_occlusion=2.0).validate()
    fields = {p.split(":")[0] for p in exc.value.problems}
    assert fields == {"fov_deg", "guidance", "max_occlusion"}


def test_unknown_key():
    with pytest.raises(ConfigError, match="colour"):
        RunConfig.from_dict({"colour": 1})


def test_strong_guidance_batch_size():
    with pytest.raises(ConfigError, match="batch_size"):
        RunConfig(batch_size=1).validate()
    RunConfig(batch_size=1, guidance="weak").validate()


def test_unreadable_file(tmp_path):
    (tmp_path / "c.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
