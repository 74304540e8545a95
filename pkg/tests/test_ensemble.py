"""Tests for ensemble weights, sample pooling, plans and the rolling-origin runner"""

import numpy as np
import pandas as pd
import pytest

from core.errors import BadInputError, MissingArtifactError, PlanValidationError, WeightsFrozenError
from core.ensemble import (
    ENSEMBLE,
    EnsembleWeights,
    ForecastCube,
    RunDirectory,
    TscvPlan,
    add_ensemble,
    allocate,
    compute_weights,
    inverse_crps_weights,
    pool_samples,
    run_evaluation,
    run_tscv,
    split_plans,
    weights_from_scores,
)
from core.ensemble import tscv
from core.models.base import ForecastDistribution, to_distributions
from core.models.reference import ReferenceModel
from core.models.registry import PRESETS
from core.panel.features import lag_cases
from core.scoring.table import ScoreTable
from core.thresholds.rules import OutbreakRule

MODELS = [PRESETS["reference"], PRESETS["st1"]]


class PeekingReference(ReferenceModel):
    """Reference model whose forecasts add last month's count read from the full panel"""

    def __init__(self, full_panel):
        self.full_panel = full_panel

    def forecast(self, fitted, panel, origin, horizon, n_samples, rng):
        forecasts = super().forecast(fitted, panel, origin, horizon, n_samples, rng)
        t = origin + horizon
        previous = lag_cases(self.full_panel, 1, t + 1)
        district = np.arange(panel.n_districts)
        month = np.full(panel.n_districts, t)
        counts = np.stack([forecasts[d].samples for d in panel.districts], axis=1)
        counts = counts + np.nan_to_num(previous.values[district, month, 0]).astype(np.int64)
        return to_distributions(panel, origin, horizon, counts, previous.newest_datum(district, month))


@pytest.fixture(scope="module")
def cv_plan():
    # st1 needs 24 training months, so its first two origins fail
    return TscvPlan.monthly("2005-10", "2005-10", "2006-03", phase="cv", boundary="2006-06")


@pytest.fixture(scope="module")
def cv_result(panel, cv_plan):
    return run_tscv(panel, MODELS, cv_plan, seed=42, n_samples=1000,
                    rules=[OutbreakRule("fixed_rate", level=50)], jobs=1)


class TestWeights:
    def test_inverse_squared_crps(self):
        w = inverse_crps_weights({"st1": 4.41, "st2": 3.99, "st3": 3.38, "hhh4": 4.31, "pca": 4.45})
        expected = [0.168, 0.205, 0.286, 0.176, 0.165]
        assert np.allclose(list(w.values()), expected, atol=2e-3)
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)
        assert max(w, key=w.get) == "st3"

    def test_two_models(self):
        w = inverse_crps_weights({"a": 1.0, "b": 2.0})
        assert w["a"] == pytest.approx(0.8)
        assert w["b"] == pytest.approx(0.2)

    def test_equal_crps(self):
        assert inverse_crps_weights({"a": 3.0, "b": 3.0}) == {"a": 0.5, "b": 0.5}

    def test_zero_crps_takes_everything(self):
        weights = compute_weights({"a": 0.0, "b": 2.0})
        assert weights.weights == {"a": 1.0, "b": 0.0}
        assert weights.degenerate

    def test_negative_crps(self):
        with pytest.raises(BadInputError):
            inverse_crps_weights({"a": -1.0})

    def test_weights_must_sum_to_one(self):
        with pytest.raises(BadInputError):
            EnsembleWeights(weights={"a": 0.6, "b": 0.6})

    def test_frozen_weights_cannot_be_recomputed(self):
        frozen = compute_weights({"a": 1.0, "b": 2.0}).freeze()
        assert frozen.frozen
        with pytest.raises(WeightsFrozenError):
            frozen.recompute({"a": 2.0, "b": 1.0})
        assert compute_weights({"a": 1.0}).recompute({"a": 2.0}).weights == {"a": 1.0}

    def test_renormalized_over_available(self):
        weights = compute_weights({"a": 1.0, "b": 2.0, "c": 2.0})
        sub = weights.for_models(["b", "c"])
        assert sub == pytest.approx({"b": 0.5, "c": 0.5})
        with pytest.raises(BadInputError):
            weights.for_models(["z"])

    def test_json_round_trip(self):
        weights = compute_weights({"a": 1.0, "b": 2.0}, by_horizon={1: {"a": 2.0, "b": 1.0}}).freeze()
        back = EnsembleWeights.from_json(weights.to_json())
        assert back == weights
        assert back.for_horizon(1)["b"] == pytest.approx(0.8)
        assert back.for_horizon(2) == back.weights

    def test_from_scores(self):
        rows = [{"model": m, "district": "D01", "origin_year": 2012, "origin_month": 1, "horizon": h,
                 "metric": "crps", "value": v} for m, h, v in [("a", 1, 1.0), ("a", 2, 1.0), ("b", 1, 2.0), ("b", 2, 2.0)]]
        weights = weights_from_scores(ScoreTable.from_rows(rows), ["a", "b"], per_horizon=True)
        assert weights.weights["a"] == pytest.approx(0.8)
        assert set(weights.by_horizon) == {1, 2}
        with pytest.raises(BadInputError):
            weights_from_scores(ScoreTable.from_rows(rows), ["a", "c"])


class TestPooling:
    def _dist(self, value, n=1000, horizon=1):
        return ForecastDistribution("D01", pd.Period("2012-01", freq="M"), horizon, np.full(n, value))

    def test_allocate_halves(self):
        assert allocate({"a": 0.5, "b": 0.5}, 10000) == {"a": 5000, "b": 5000}

    def test_allocate_thirds(self):
        assert allocate({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}, 10000) == {"a": 3334, "b": 3333, "c": 3333}

    def test_allocate_sums(self):
        counts = allocate(inverse_crps_weights({"a": 4.41, "b": 3.99, "c": 3.38}), 10000)
        assert sum(counts.values()) == 10000

    def test_pooled_point_masses(self):
        pooled = pool_samples({"a": self._dist(3), "b": self._dist(7)}, {"a": 0.25, "b": 0.75}, 1000,
                              np.random.default_rng(0))
        assert pooled.n_samples == 1000
        assert int(np.sum(pooled.samples == 3)) == 250
        assert int(np.sum(pooled.samples == 7)) == 750

    def test_single_component(self):
        pooled = pool_samples({"a": self._dist(5)}, {"a": 1.0}, 2000, np.random.default_rng(0))
        assert np.all(pooled.samples == 5)

    def test_missing_component(self):
        with pytest.raises(BadInputError):
            pool_samples({"a": self._dist(3)}, {"a": 0.5, "b": 0.5}, 100)

    def test_mismatched_units(self):
        with pytest.raises(BadInputError):
            pool_samples({"a": self._dist(3), "b": self._dist(3, horizon=2)}, {"a": 0.5, "b": 0.5}, 100)


class TestPlans:
    def test_default_split(self):
        cv, evaluation = split_plans("2011-12", "2011-12", "2016-11", "2016-12", "2022-09")
        assert len(cv.origins) == 60
        assert cv.first == pd.Period("2011-12", freq="M")
        assert evaluation.first == pd.Period("2016-12", freq="M")
        assert len(evaluation.origins) == 70

    def test_overlap_rejected(self):
        with pytest.raises(PlanValidationError):
            split_plans("2011-12", "2011-12", "2016-11", "2016-06", "2022-09")

    def test_cv_into_holdout(self):
        with pytest.raises(PlanValidationError):
            TscvPlan.monthly("2011-12", "2011-12", "2017-01", phase="cv", boundary="2016-12")

    def test_origin_before_training_end(self):
        with pytest.raises(PlanValidationError):
            TscvPlan.monthly("2012-06", "2012-01", "2012-12")

    def test_gap_in_origins(self):
        with pytest.raises(PlanValidationError):
            TscvPlan("2012-01", ("2012-01", "2012-03"))

    def test_check_disjoint(self):
        a = TscvPlan.monthly("2012-01", "2012-01", "2012-12")
        b = TscvPlan.monthly("2012-01", "2012-12", "2013-06", phase="evaluation")
        with pytest.raises(PlanValidationError):
            a.check_disjoint(b)

    def test_origins_outside_panel(self, panel):
        plan = TscvPlan.monthly("2006-06", "2007-06", "2008-06")
        with pytest.raises(PlanValidationError):
            plan.origin_indices(panel)

    def test_dict_round_trip(self, cv_plan):
        assert TscvPlan.from_dict(cv_plan.to_dict()) == cv_plan


class TestForecastCube:
    def test_empty_cube(self):
        cube = ForecastCube.empty("st1", pd.period_range("2012-01", periods=2, freq="M"), (1, 2), ("D01",), 5)
        assert not cube.available(0, 0)
        assert cube.distribution(0, 0, 0) is None
        assert cube.to_frame().empty

    def test_bad_shape(self):
        with pytest.raises(BadInputError):
            ForecastCube("st1", pd.period_range("2012-01", periods=2, freq="M"), (1,), ("D01",),
                         np.zeros((1, 1, 1, 3)))

    def test_save_and_load(self, tmp_path):
        samples = np.arange(2 * 3 * 2 * 4).reshape(2, 3, 2, 4)
        cube = ForecastCube("st1", pd.period_range("2012-01", periods=2, freq="M"), (1, 2, 3), ("D01", "D02"), samples)
        run = RunDirectory(str(tmp_path))
        run.write_cubes([cube])
        assert run.models() == ["st1"]
        back = run.read_cube("st1")
        assert np.array_equal(back.samples, samples)
        assert back.origins.equals(cube.origins)
        assert back.distribution(1, 2, 1).target == pd.Period("2012-05", freq="M")
        assert len(back.to_frame()) == samples.size

    def test_missing_cube(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            RunDirectory(str(tmp_path)).read_cube("st1")
        with pytest.raises(MissingArtifactError):
            RunDirectory(str(tmp_path / "nope")).models()

    def test_manifest(self, tmp_path):
        run = RunDirectory(str(tmp_path))
        run.write_manifest(7, {"seed": 7}, [], audit={"passed": True})
        manifest = run.read_manifest()
        assert manifest["seed"] == 7
        assert "numpy" in manifest["versions"]
        assert len(manifest["config_sha256"]) == 64


class TestRollingOrigin:
    def test_scores_and_failures(self, cv_result):
        crps = cv_result.scores.select(metric="crps")
        assert len(crps.select(model="reference")) == 6 * 3 * 5
        assert len(crps.select(model="st1")) == 4 * 3 * 5
        assert sorted(f["origin"] for f in cv_result.failures) == ["2005-10", "2005-11"]
        assert all(f["model"] == "st1" for f in cv_result.failures)
        assert not cv_result.scores.violations()

    def test_failed_units_hold_missing(self, cv_result):
        cube = cv_result.cubes["st1"]
        assert np.all(cube.samples[:2] == -1)
        assert cube.available(2, 0)

    def test_leakage_audit(self, cv_result):
        assert cv_result.audit.passed
        # failed st1 fits forecast nothing, so only their four fitted origins are checked
        assert cv_result.audit.checked == (6 + 4) * 3

    def test_audit_flags_a_feature_read_past_the_origin(self, panel, monkeypatch):
        monkeypatch.setattr(tscv, "model_for", lambda family: PeekingReference(panel))
        plan = TscvPlan.monthly("2005-10", "2005-10", "2005-11")
        result = run_tscv(panel, [PRESETS["reference"]], plan, seed=3, n_samples=1000, jobs=1)
        assert not result.audit.passed
        assert {v["horizon"] for v in result.audit.violations} == {2, 3}
        assert {v["consumed_after_origin"] for v in result.audit.violations} == {1, 2}

    def test_outbreak_rows(self, cv_result):
        metrics = set(cv_result.scores.frame["metric"])
        assert {"p_outbreak:fixed_rate_50", "brier:fixed_rate_50"} <= metrics

    def test_deterministic_replay(self, panel):
        plan = TscvPlan.monthly("2005-10", "2005-10", "2005-11")
        a = run_tscv(panel, [PRESETS["reference"]], plan, seed=3, n_samples=1000, jobs=1)
        b = run_tscv(panel, [PRESETS["reference"]], plan, seed=3, n_samples=1000, jobs=1)
        assert np.array_equal(a.cubes["reference"].samples, b.cubes["reference"].samples)
        pd.testing.assert_frame_equal(a.scores.frame, b.scores.frame)

    def test_ensemble(self, panel, cv_result):
        weights = weights_from_scores(cv_result.scores, ["reference", "st1"])
        result = add_ensemble(cv_result, panel, weights, seed=42, n_total=2000)
        cube = result.cubes[ENSEMBLE]
        assert cube.n_samples == 2000
        assert cube.available(0, 0)
        # early origins pool the reference model alone
        ref = set(np.unique(cv_result.cubes["reference"].samples[0, 0, 0]))
        assert set(np.unique(cube.samples[0, 0, 0])) <= ref
        assert len(result.scores.select(model=ENSEMBLE, metric="crps")) == 6 * 3 * 5

    def test_evaluation_needs_frozen_weights(self, panel):
        plan = TscvPlan.monthly("2005-10", "2006-06", "2006-07", phase="evaluation", boundary="2006-06")
        weights = compute_weights({"reference": 1.0})
        with pytest.raises(WeightsFrozenError):
            run_evaluation(panel, [PRESETS["reference"]], weights, plan, seed=1)

    def test_evaluation(self, panel, cv_plan):
        plan = TscvPlan.monthly("2005-10", "2006-06", "2006-07", phase="evaluation", boundary="2006-06")
        weights = compute_weights({"reference": 1.0}).freeze()
        result = run_evaluation(panel, [PRESETS["reference"]], weights, plan, seed=1, n_samples=1000,
                                n_total=1000, cv_plan=cv_plan, jobs=1)
        assert set(result.cubes) == {"reference", ENSEMBLE}
        assert result.weights.frozen
