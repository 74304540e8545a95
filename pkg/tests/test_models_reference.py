"""Tests for the model contract, the reference model and the preset registry"""

import numpy as np
import pytest

from core.errors import BadInputError, SpecError
from core.models.base import NEWEST_DATUM, ForecastDistribution, FittedModel, ModelSpec, crpss, forecast_rng
from core.models.reference import ReferenceModel
from core.models.registry import PRESETS, model_for, preset, resolve_specs, sweep_specs
from tests.conftest import make_panel


@pytest.fixture(scope="module")
def reference_spec():
    return PRESETS["reference"]


@pytest.fixture(scope="module")
def constant_fit(reference_spec):
    panel = make_panel(np.full((3, 36), 50))
    return panel, ReferenceModel().fit(reference_spec, panel, 35)


@pytest.fixture(scope="module")
def synthetic_fit(panel, reference_spec):
    return ReferenceModel().fit(reference_spec, panel, 35)


class TestModelSpec:
    def test_short_lag_rejected_for_spatiotemporal(self):
        with pytest.raises(SpecError):
            ModelSpec(name="bad", family="spatiotemporal", case_lag=1)

    def test_short_lag_allowed_for_hhh4(self):
        spec = ModelSpec(name="ok", family="hhh4", case_lag=1, covariate_lag=1)
        assert spec.max_horizon == 3

    def test_unknown_cumulative_window(self):
        with pytest.raises(SpecError):
            ModelSpec(name="bad", family="spatiotemporal", cumulative_windows=(6,))

    def test_spec_is_frozen(self, reference_spec):
        with pytest.raises(Exception):
            reference_spec.case_lag = 5

    def test_model_id_is_stable(self):
        assert PRESETS["st2"].model_id == preset("st2").model_id
        assert PRESETS["st2"].model_id != PRESETS["st1"].model_id


class TestForecastDistribution:
    def test_negative_samples_rejected(self):
        with pytest.raises(BadInputError):
            ForecastDistribution("D01", make_panel([[1, 2]]).months[0], 1, np.array([1, -1]))

    def test_single_sample_is_not_scorable(self):
        dist = ForecastDistribution("D01", make_panel([[1, 2]]).months[0], 1, np.array([4]))
        assert dist.n_samples == 1
        with pytest.raises(BadInputError):
            dist.check_scorable()

    def test_target_month(self):
        months = make_panel(np.zeros((1, 6), dtype=int)).months
        dist = ForecastDistribution("D01", months[2], 3, np.arange(1000))
        assert dist.target == months[5]
        dist.check_scorable()


class TestReferenceModel:
    def test_constant_counts(self, constant_fit):
        panel, fitted = constant_fit
        point = ReferenceModel().point_forecast(fitted, panel, 35, 1)
        assert np.allclose(point, 50.0, rtol=0.02)

    def test_constant_counts_samples(self, constant_fit):
        panel, fitted = constant_fit
        forecasts = ReferenceModel().forecast(fitted, panel, 35, 1, 4000, forecast_rng(1, fitted.spec, 35, 1))
        assert set(forecasts) == set(panel.districts)
        for dist in forecasts.values():
            assert dist.mean() == pytest.approx(50.0, rel=0.05)
            assert dist.target == panel.months[35] + 1

    def test_single_district_month_effects_shrink(self, reference_spec):
        rng = np.random.default_rng(3)
        moy = np.arange(48) % 12
        cases = rng.poisson(30.0 * np.exp(0.8 * np.sin(2 * np.pi * moy / 12.0)))[None, :]
        panel = make_panel(cases)
        fitted = ReferenceModel().fit(reference_spec, panel, 47)
        effects = ReferenceModel.params(fitted).month_effects[0]

        monthly = np.array([cases[0, moy == m].mean() for m in range(12)])
        unpenalized = np.log(monthly) - np.log(monthly).mean()
        centred = effects - effects.mean()
        assert np.linalg.norm(centred) < np.linalg.norm(unpenalized)
        assert np.corrcoef(centred, unpenalized)[0, 1] > 0.9

    def test_empty_window(self, reference_spec, panel):
        with pytest.raises(BadInputError):
            ReferenceModel().fit(reference_spec, panel, -1)

    def test_window_too_short(self, reference_spec, panel):
        with pytest.raises(BadInputError):
            ReferenceModel().fit(reference_spec, panel, 5)

    def test_seeded_forecasts_repeat(self, panel, synthetic_fit):
        model = ReferenceModel()
        spec = synthetic_fit.spec
        a = model.forecast(synthetic_fit, panel, 35, 2, 1000, forecast_rng(7, spec, 35, 2))
        b = model.forecast(synthetic_fit, panel, 35, 2, 1000, forecast_rng(7, spec, 35, 2))
        for d in panel.districts:
            assert np.array_equal(a[d].samples, b[d].samples)

    def test_different_seeds_differ(self, panel, synthetic_fit):
        model = ReferenceModel()
        spec = synthetic_fit.spec
        a = model.forecast(synthetic_fit, panel, 35, 1, 1000, forecast_rng(7, spec, 35, 1))
        b = model.forecast(synthetic_fit, panel, 35, 1, 1000, forecast_rng(8, spec, 35, 1))
        assert not all(np.array_equal(a[d].samples, b[d].samples) for d in panel.districts)

    def test_horizon_beyond_spec(self, panel, synthetic_fit):
        with pytest.raises(BadInputError):
            ReferenceModel().forecast(synthetic_fit, panel, 35, 4, 1000, np.random.default_rng(0))

    def test_forecast_past_panel_end(self, panel, synthetic_fit):
        forecasts = ReferenceModel().forecast(synthetic_fit, panel, panel.n_months - 1, 3, 1000,
                                              np.random.default_rng(0))
        assert all(d.target == panel.months[-1] + 3 for d in forecasts.values())

    def test_recorded_reads(self, panel, synthetic_fit):
        assert synthetic_fit.diagnostics.extra[NEWEST_DATUM] == 35
        forecasts = ReferenceModel().forecast(synthetic_fit, panel, 35, 3, 1000, np.random.default_rng(0))
        assert {d.newest_datum for d in forecasts.values()} == {-1}

    def test_fitted_rates_shape(self, panel, synthetic_fit):
        rates = ReferenceModel().fitted_rates(synthetic_fit, panel)
        assert rates.shape == (panel.n_districts, 36)
        assert np.all(rates > 0)

    def test_json_round_trip(self, panel, synthetic_fit):
        restored = FittedModel.from_json(synthetic_fit.to_json())
        assert restored.spec == synthetic_fit.spec
        assert restored.train_end == synthetic_fit.train_end
        model = ReferenceModel()
        assert np.allclose(model.point_forecast(restored, panel, 35, 1),
                           model.point_forecast(synthetic_fit, panel, 35, 1))

    def test_unsupported_format(self, synthetic_fit):
        text = synthetic_fit.to_json().replace('"format_version": 1', '"format_version": 99')
        with pytest.raises(BadInputError):
            FittedModel.from_json(text)


class TestSkillScore:
    def test_equal_crps(self):
        assert crpss(4.0, 4.0) == 0.0

    def test_perfect_model(self):
        assert crpss(0.0, 4.0) == 1.0

    def test_improvement(self):
        assert crpss(3.20, 12.2) == pytest.approx(0.738, abs=1e-3)

    def test_zero_reference(self):
        assert np.isnan(crpss(1.0, 0.0))


class TestRegistry:
    def test_presets(self):
        assert set(PRESETS) == {"reference", "st1", "st2", "st3", "hhh4", "pca"}
        assert PRESETS["st2"].covariates == ("tmin", "rain")
        assert PRESETS["st2"].effects.spatial == "bym2"
        assert PRESETS["st3"].cumulative_windows == (12, 24, 36)
        assert PRESETS["reference"].offset_lag is None

    def test_model_for(self):
        assert isinstance(model_for("reference"), ReferenceModel)
        with pytest.raises(SpecError):
            model_for("arima")

    def test_unknown_preset(self):
        with pytest.raises(SpecError):
            preset("st9")

    def test_overrides_are_validated(self):
        spec = resolve_specs(["st2"], {"st2": {"covariates": ["tmin"]}})[0]
        assert spec.covariates == ("tmin",)
        with pytest.raises(SpecError):
            preset("st2", {"covariate_lag": 1})

    def test_sweep(self):
        specs = sweep_specs()
        assert len(specs) == 60
        assert len({s.name for s in specs}) == 60
        assert all(s.offset_lag == 3 for s in specs)
        assert preset(specs[0].name) == specs[0]
