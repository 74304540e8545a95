"""Tests for scoring rules and the score table"""

import numpy as np
import pandas as pd
import pytest

from core.errors import BadInputError, MissingArtifactError
from core.models.base import ForecastDistribution
from core.scoring.metrics import (
    bias,
    brier,
    calibration_bins,
    classification_metrics,
    crps,
    diffuseness,
    labels_from_probability,
)
from core.scoring.table import ScoreTable, score_forecast
from core.synth.generator import bernoulli_outcomes
from core.thresholds.rules import Label, OutbreakRuleResult


def _integrated_crps(samples, y):
    """Integral of (F(x) - 1{x >= y})^2 for the empirical CDF, summed over its steps"""
    x = np.sort(np.asarray(samples, dtype=float))
    knots = np.unique(np.append(x, y))
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        F = np.searchsorted(x, lo, side="right") / len(x)
        step = 1.0 if lo >= y else 0.0
        total += (F - step) ** 2 * (hi - lo)
    return total


def _row(metric, value, district="D01", year=2016, month=12, horizon=1, model="st2"):
    return {"model": model, "district": district, "origin_year": year, "origin_month": month,
            "horizon": horizon, "metric": metric, "value": value}


class TestCrps:
    def test_perfect_forecast(self):
        assert crps(np.full(10, 7), 7) == 0.0

    def test_point_mass(self):
        assert crps([5, 5, 5], 2) == pytest.approx(3.0)

    def test_two_point(self):
        assert crps([0, 2], 1) == pytest.approx(0.5)

    def test_matches_integration(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            samples = rng.poisson(rng.uniform(1, 50), size=int(rng.integers(2, 60)))
            y = int(rng.integers(0, 60))
            assert crps(samples, y) == pytest.approx(_integrated_crps(samples, y), rel=1e-6, abs=1e-12)

    def test_vectorized(self):
        values = crps(np.array([[5, 5, 5], [0, 2, 2]]), np.array([2, 1]))
        assert values.shape == (2,)
        assert values[0] == pytest.approx(3.0)

    def test_true_distribution_scores_best(self):
        rng = np.random.default_rng(1)
        truth = rng.poisson(10, size=10000)
        forecast = rng.poisson(10, size=2000)
        honest = np.mean(crps(np.broadcast_to(forecast, (500, 2000)), truth[:500]))
        for wrong in (3, 6, 15, 20, 30):
            other = rng.poisson(wrong, size=2000)
            assert honest <= np.mean(crps(np.broadcast_to(other, (500, 2000)), truth[:500]))

    def test_empty_samples(self):
        with pytest.raises(BadInputError):
            crps([], 1)


class TestBiasAndDiffuseness:
    def test_over_prediction(self):
        assert bias([5, 6, 7], 2) == 1.0

    def test_median(self):
        assert bias([1, 2, 4, 5], 3) == 0.0

    def test_ties(self):
        assert bias([1, 1, 3], 1) == pytest.approx(1.0 / 3.0)

    def test_reflection(self):
        samples = np.array([1.0, 4.0, 4.0, 9.0])
        assert bias(samples, 5.0) == pytest.approx(-0.5)
        assert bias(samples, 5.0) == pytest.approx(-bias(10.0 - samples, 5.0))

    def test_constant_samples(self):
        assert diffuseness(np.full(5, 3)) == 0.0

    def test_two_point_diffuseness(self):
        assert diffuseness([0, 2]) == pytest.approx(0.5)

    def test_diffuseness_needs_two_samples(self):
        with pytest.raises(BadInputError):
            diffuseness([4])

    def test_scaling(self):
        x = np.array([0.0, 2.0, 4.0])
        assert diffuseness(10 * x) > diffuseness(x)
        assert diffuseness(10 * x) < 10 * diffuseness(x)


class TestBrier:
    def test_perfect(self):
        assert brier([1, 1, 1], [1, 1, 1]) == 0.0

    def test_constant_half(self):
        assert brier([0.5] * 4, [0, 1, 1, 0]) == pytest.approx(0.25)

    def test_two_cases(self):
        assert brier([0.8, 0.2], [1, 0]) == pytest.approx(0.04)

    def test_label_symmetry(self):
        p, o = np.array([0.1, 0.7, 0.4]), np.array([0, 1, 1])
        assert brier(p, o) == pytest.approx(brier(1 - p, 1 - o))

    def test_undefined_labels_dropped(self):
        assert brier([0.8, 0.3, 0.2], [1, np.nan, 0]) == pytest.approx(0.04)

    def test_empty(self):
        assert np.isnan(brier([], []))

    def test_bad_probability(self):
        with pytest.raises(BadInputError):
            brier([1.2], [1])


class TestCalibration:
    def test_bins(self):
        table = calibration_bins([0.95, 1.0, 0.05], [1, 1, 0])
        assert len(table) == 10
        assert table["count"].iloc[9] == 2
        assert table["count"].iloc[0] == 1
        assert table["count"].iloc[5] == 0
        assert np.isnan(table["observed_frequency"].iloc[5])

    @pytest.mark.slow
    def test_calibrated_outcomes(self):
        p = np.repeat(np.arange(10) / 10 + 0.05, 10000)
        table = calibration_bins(p, bernoulli_outcomes(p, seed=3))
        assert np.all(np.abs(table["observed_frequency"] - table["predicted_mean"]) < 0.05)


class TestClassification:
    def test_confusion_matrix(self):
        predicted = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
        observed = [1, 1, 0, 0, 1, 0, 0, 0, 0, 0]
        m = classification_metrics(predicted, observed)
        assert (m.tp, m.fp, m.tn, m.fn) == (2, 2, 5, 1)
        assert m.sensitivity == pytest.approx(2 / 3)
        assert m.specificity == pytest.approx(5 / 7)
        assert m.ppv == pytest.approx(0.5)
        assert m.accuracy == pytest.approx(0.7)

    def test_all_negative(self):
        m = classification_metrics([0, 0, 0, 0], [1, 0, 1, 0])
        assert m.sensitivity == 0.0
        assert m.specificity == 1.0
        assert np.isnan(m.ppv)

    def test_cutoff(self):
        labels = labels_from_probability([0.2, 0.5, np.nan, 0.9])
        assert labels[:2].tolist() == [0.0, 1.0]
        assert np.isnan(labels[2])

    def test_probability_equal_to_cutoff(self):
        assert labels_from_probability([0.3, 0.3 - 1e-12], cutoff=0.3).tolist() == [1.0, 0.0]


class TestScoreTable:
    def test_score_forecast_rows(self):
        dist = ForecastDistribution("D01", pd.Period("2016-12", freq="M"), 2, np.arange(1000) % 20)
        rules = {
            "mean_2sd": OutbreakRuleResult(9.5, Label.OUTBREAK, 60, 12.0),
            "percentile_95": OutbreakRuleResult(float("nan"), Label.UNDEFINED, 3),
        }
        rows = score_forecast("st2", dist, 12, rules)
        metrics = [r["metric"] for r in rows]
        assert metrics == ["crps", "bias", "diffuseness", "p_outbreak:mean_2sd",
                           "observed_outbreak:mean_2sd", "brier:mean_2sd"]
        values = {r["metric"]: r["value"] for r in rows}
        assert values["p_outbreak:mean_2sd"] == pytest.approx(0.5)
        assert values["brier:mean_2sd"] == pytest.approx(0.25)

    def test_too_few_samples(self):
        dist = ForecastDistribution("D01", pd.Period("2016-12", freq="M"), 1, np.arange(10))
        with pytest.raises(BadInputError):
            score_forecast("st2", dist, 3)

    def test_aggregate(self):
        table = ScoreTable.from_rows([_row("crps", 2.0), _row("crps", 4.0, district="D02")])
        overall = table.aggregate("overall")
        assert overall["value"].tolist() == [3.0]
        assert table.aggregate("district")["value"].tolist() == [2.0, 4.0]

    def test_aggregate_by_target_month(self):
        rows = [_row("crps", 5.0, month=12, horizon=1), _row("crps", 5.0, month=11, horizon=2, district="D02"),
                _row("crps", 1.0, month=12, horizon=3)]
        by_month = ScoreTable.from_rows(rows).aggregate("month")
        assert by_month.set_index("month")["value"].to_dict() == {1: 5.0, 3: 1.0}

    def test_aggregate_errors(self):
        with pytest.raises(BadInputError):
            ScoreTable().aggregate()
        with pytest.raises(BadInputError):
            ScoreTable.from_rows([_row("crps", 1.0)]).aggregate("year")

    def test_violations(self):
        table = ScoreTable.from_rows([_row("bias", 1.5), _row("crps", 1.0)])
        assert table.violations() == ["1 bias values outside [-1.0, 1.0]"]

    def test_write_and_read(self, tmp_path):
        rows = [_row("crps", 1.5), _row("bias", -0.2), _row("crps", 2.5, model="reference")]
        paths = ScoreTable.from_rows(rows).write(str(tmp_path))
        assert sorted(p.split("/")[-1] for p in paths) == ["reference.csv", "scores.csv", "st2.csv"]
        back = ScoreTable.read(str(tmp_path))
        assert back.models == ["reference", "st2"]
        assert back.mean("st2") == pytest.approx(1.5)
        wide = pd.read_csv(tmp_path / "scores.csv")
        assert {"crps", "bias"} <= set(wide.columns)

    def test_read_missing(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            ScoreTable.read(str(tmp_path / "nope"))
        with pytest.raises(MissingArtifactError):
            ScoreTable.read(str(tmp_path))
