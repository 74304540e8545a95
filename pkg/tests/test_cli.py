"""End-to-end tests of the command-line interface on a synthetic fixture"""

import filecmp
import json
import os

import pandas as pd
import pytest

from main import main

FAST_OVERRIDES = (
    ('presets = ["reference", "st2"]', 'presets = ["reference"]'),
    ('members = ["st2"]', 'members = ["reference"]'),
)


def _fast_config(fixture_dir: str) -> str:
    """The fixture config cut down to the reference model and two cheap outbreak rules"""
    with open(os.path.join(fixture_dir, "config.toml")) as f:
        text = f.read()
    for old, new in FAST_OVERRIDES:
        assert old in text
        text = text.replace(old, new)
    text += 'rules = ["fixed_rate", "mean_plus_2sd"]\n'
    path = os.path.join(fixture_dir, "fast.toml")
    with open(path, "w") as f:
        f.write(text)
    return path


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("fixture"))
    assert main(["synthgen", "--seed", "5", "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def fast_run(fixture_dir, tmp_path_factory):
    """Every pipeline stage in order, with its exit code"""
    config = _fast_config(fixture_dir)
    out = str(tmp_path_factory.mktemp("run"))
    codes = {}
    for command in ("tscv", "ensemble", "evaluate", "forecast", "detect", "score", "report"):
        codes[command] = main([command, "--config", config, "--out", out, "--jobs", "1"])
    return out, codes


class TestSynthgen:
    def test_fixture_files(self, fixture_dir):
        for name in ("panel.csv", "adjacency.csv", "centroids.csv", "stations.csv", "config.toml",
                     "covariates/tmin.csv", "covariates/rain.csv", "grids/tmin.csv", "grids/rain.csv"):
            assert os.path.exists(os.path.join(fixture_dir, name)), name

    def test_missing_seed(self, tmp_path):
        assert main(["synthgen", "--out", str(tmp_path)]) == 2


class TestIngestWeather:
    def test_station_mode(self, fixture_dir, tmp_path):
        config = os.path.join(fixture_dir, "config.toml")
        assert main(["ingest-weather", "--config", config, "--out", str(tmp_path), "--jobs", "1"]) == 0
        written = sorted(os.listdir(tmp_path / "covariates"))
        assert written == ["flagged_months.csv", "rain.csv", "tmin.csv"]
        tmin = pd.read_csv(tmp_path / "covariates" / "tmin.csv")
        assert tmin["tmin"].notna().all()

    def test_grid_mode(self, fixture_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("DENGUECAST_WEATHER__MODE", "grid")
        config = os.path.join(fixture_dir, "config.toml")
        assert main(["ingest-weather", "--config", config, "--out", str(tmp_path)]) == 0
        assert {"rain.csv", "tmin.csv"} <= set(os.listdir(tmp_path / "covariates"))

    def test_missing_centroids(self, fixture_dir, tmp_path, monkeypatch):
        monkeypatch.setenv("DENGUECAST_PATHS__CENTROIDS", str(tmp_path / "absent.csv"))
        config = os.path.join(fixture_dir, "config.toml")
        assert main(["ingest-weather", "--config", config, "--out", str(tmp_path)]) == 2


class TestExitCodes:
    def test_score_before_tscv(self, fixture_dir, tmp_path):
        config = os.path.join(fixture_dir, "config.toml")
        assert main(["score", "--config", config, "--out", str(tmp_path)]) == 3

    def test_evaluate_without_weights(self, fixture_dir, tmp_path):
        config = os.path.join(fixture_dir, "config.toml")
        assert main(["evaluate", "--config", config, "--out", str(tmp_path)]) == 3

    def test_missing_config(self, tmp_path):
        assert main(["tscv", "--config", str(tmp_path / "absent.toml"), "--seed", "1"]) == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["plot"])


class TestPipeline:
    def test_every_stage_succeeds(self, fast_run):
        _, codes = fast_run
        assert codes == {command: 0 for command in codes}

    def test_cv_artifacts(self, fast_run):
        out, _ = fast_run
        for name in ("plan.json", "manifest.json", "weights.json", "forecasts/reference.npy",
                     "forecasts/ensemble.npy", "scores/scores.csv"):
            assert os.path.exists(os.path.join(out, name)), name
        with open(os.path.join(out, "plan.json")) as f:
            plan = json.load(f)
        assert len(plan["cv"]["origins"]) == 12
        with open(os.path.join(out, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["leakage_audit"]["passed"]
        assert manifest["seed"] == 5

    def test_score_rows(self, fast_run):
        out, _ = fast_run
        scores = pd.read_csv(os.path.join(out, "scores", "reference.csv"))
        assert len(scores[scores["metric"] == "crps"]) == 12 * 5 * 3
        assert {"brier:fixed_rate_50", "brier:mean_plus_2sd"} & set(scores["metric"])

    def test_weights(self, fast_run):
        out, _ = fast_run
        with open(os.path.join(out, "weights.json")) as f:
            weights = json.load(f)
        assert weights["frozen"]
        assert weights["weights"] == {"reference": 1.0}

    def test_evaluation(self, fast_run):
        out, _ = fast_run
        evaluation = os.path.join(out, "evaluation")
        assert os.path.exists(os.path.join(evaluation, "forecasts", "ensemble.npy"))
        scores = pd.read_csv(os.path.join(evaluation, "scores", "ensemble.csv"))
        assert len(scores[scores["metric"] == "crps"]) == 5 * 3

    def test_realtime_forecast(self, fast_run):
        out, _ = fast_run
        assert sorted(os.listdir(os.path.join(out, "forecast"))) == ["ensemble.csv", "reference.csv"]
        frame = pd.read_csv(os.path.join(out, "forecast", "reference.csv"))
        assert sorted(frame["horizon"].unique()) == [1, 2, 3]
        assert (frame["value"] >= 0).all()

    def test_detect(self, fast_run):
        out, _ = fast_run
        files = sorted(os.listdir(os.path.join(out, "detect")))
        assert files == ["fixed_rate_100.csv", "fixed_rate_150.csv", "fixed_rate_300.csv",
                         "fixed_rate_50.csv", "mean_plus_2sd.csv"]
        frame = pd.read_csv(os.path.join(out, "detect", "fixed_rate_50.csv"))
        assert {"threshold", "label", "probability", "predicted_outbreak"} <= set(frame.columns)
        assert frame["probability"].notna().any()
        assert (frame["label"] == "undefined").any()

    def test_probability_at_cutoff_predicts_outbreak(self, fixture_dir, fast_run, monkeypatch):
        out, _ = fast_run
        path = os.path.join(out, "detect", "fixed_rate_50.csv")
        cutoff = pd.read_csv(path)["probability"].max()
        monkeypatch.setenv("DENGUECAST_THRESHOLDS__PROBABILITY_CUTOFF", repr(float(cutoff)))
        assert main(["detect", "--config", _fast_config(fixture_dir), "--out", out, "--jobs", "1"]) == 0
        frame = pd.read_csv(path)
        at_cutoff = frame[frame["probability"] == cutoff]
        assert len(at_cutoff) > 0
        assert (at_cutoff["predicted_outbreak"] == 1.0).all()
        assert frame.loc[frame["probability"].isna(), "predicted_outbreak"].isna().all()

    def test_reports(self, fast_run):
        out, _ = fast_run
        reports = os.listdir(os.path.join(out, "reports"))
        for name in ("fig3_timeseries.csv", "fig4_brier_by_month.csv", "figS5_calibration.csv",
                     "model_summary.csv"):
            assert name in reports


@pytest.mark.slow
class TestFullRun:
    def test_two_models_and_replay(self, fixture_dir, tmp_path):
        config = os.path.join(fixture_dir, "config.toml")
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["tscv", "--config", config, "--out", first]) == 0
        assert main(["tscv", "--config", config, "--out", second]) == 0
        scores = pd.read_csv(os.path.join(first, "scores", "scores.csv"))
        assert scores["crps"].notna().sum() == 2 * 12 * 5 * 3
        assert filecmp.cmp(os.path.join(first, "scores", "scores.csv"),
                           os.path.join(second, "scores", "scores.csv"), shallow=False)
