"""Tests for run configuration loading"""

import os

import pytest

from core.config import RunConfig
from core.errors import BadInputError

TOML = """
seed = 7
out_dir = "runs/test"

[paths]
panel = "data/panel.csv"
covariates = { tmin = "data/tmin.csv" }

[plan]
cv_end = "2016-10"

[models]
presets = ["reference", "st2"]
members = ["st2"]
"""


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    for key in list(os.environ):
        if key.startswith("DENGUECAST_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "conf" / "run.toml"
    path.parent.mkdir()
    path.write_text(TOML)
    return path


class TestRunConfig:
    def test_load(self, config_file):
        config = RunConfig.load(str(config_file))
        assert config.seed == 7
        assert config.plan.cv_end == "2016-10"
        assert config.plan.cv_start == "2011-12"
        assert config.models.members == ["st2"]
        assert config.thresholds.n_sims == 10000

    def test_paths_anchored_at_file(self, config_file):
        config = RunConfig.load(str(config_file))
        base = str(config_file.parent)
        assert config.paths.panel == os.path.join(base, "data/panel.csv")
        assert config.paths.covariates["tmin"] == os.path.join(base, "data/tmin.csv")
        assert config.paths.stations is None

    def test_environment_override(self, config_file, monkeypatch):
        monkeypatch.setenv("DENGUECAST_PLAN__CV_END", "2015-11")
        assert RunConfig.load(str(config_file)).plan.cv_end == "2015-11"

    def test_flags_win(self, config_file, monkeypatch):
        monkeypatch.setenv("DENGUECAST_SEED", "9")
        config = RunConfig.load(str(config_file), seed=11, out_dir=None)
        assert config.seed == 11
        assert config.out_dir == "runs/test"

    def test_missing_seed(self, config_file):
        config_file.write_text(TOML.replace("seed = 7", ""))
        with pytest.raises(BadInputError):
            RunConfig.load(str(config_file))

    def test_bad_month(self, config_file):
        config_file.write_text(TOML.replace('"2016-10"', '"October"'))
        with pytest.raises(BadInputError):
            RunConfig.load(str(config_file))

    def test_member_without_preset(self, config_file):
        config_file.write_text(TOML.replace('members = ["st2"]', 'members = ["hhh4"]'))
        with pytest.raises(BadInputError):
            RunConfig.load(str(config_file))

    def test_too_few_samples(self, config_file):
        config_file.write_text(TOML + "n_samples = 10\n")
        with pytest.raises(BadInputError):
            RunConfig.load(str(config_file))

    def test_unknown_key(self, config_file):
        config_file.write_text(TOML.replace("[plan]", "[plan]\nstart = \"2010-01\""))
        with pytest.raises(BadInputError):
            RunConfig.load(str(config_file))

    def test_missing_file(self, tmp_path):
        with pytest.raises(BadInputError):
            RunConfig.load(str(tmp_path / "absent.toml"))

    def test_check_paths(self, config_file):
        config = RunConfig.load(str(config_file))
        with pytest.raises(BadInputError, match="Missing panel file"):
            config.check_paths(["panel"])
        with pytest.raises(BadInputError, match="not set"):
            config.check_paths(["adjacency"])
        data = config_file.parent / "data"
        data.mkdir()
        (data / "panel.csv").write_text("district,year,month,cases,population\n")
        config.check_paths(["panel"])

    def test_canonical_is_json_ready(self, config_file):
        canonical = RunConfig.load(str(config_file)).canonical()
        assert canonical["plan"]["horizons"] == [1, 2, 3]
