"""Tests for supervised principal components regression"""

import numpy as np
import pytest

from core.errors import BadInputError
from core.models.base import NEWEST_DATUM, FittedModel, ModelSpec, forecast_rng
from core.models.pca import PcaModel, build_pca_design, fit_pca, y_aware_rescale
from core.models.registry import PRESETS
from tests.conftest import make_panel


@pytest.fixture(scope="module")
def pca_fit(panel):
    return PcaModel().fit(PRESETS["pca"], panel, 35)


class TestRescale:
    def test_identical_column_has_unit_slope(self):
        y = np.random.default_rng(0).normal(size=200)
        rescaled, slopes, means = y_aware_rescale(np.column_stack([y, y]), y)
        assert np.allclose(slopes, 1.0)
        assert np.allclose(rescaled.mean(axis=0), 0.0)

    def test_noise_column_has_small_slope(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=500)
        _, slopes, _ = y_aware_rescale(rng.normal(size=(500, 1)), y)
        assert abs(slopes[0]) < 0.2

    def test_constant_column(self):
        y = np.arange(10, dtype=float)
        rescaled, slopes, _ = y_aware_rescale(np.column_stack([np.full(10, 3.0), y]), y)
        assert slopes[0] == 0.0
        assert np.allclose(rescaled[:, 0], 0.0)

    def test_window_limits_estimation(self):
        y = np.concatenate([np.arange(10.0), np.zeros(5)])
        x = np.concatenate([np.arange(10.0), np.full(5, 100.0)])
        _, slopes, _ = y_aware_rescale(x[:, None], y, window=np.arange(15) < 10)
        assert slopes[0] == pytest.approx(1.0)


class TestPca:
    def test_dominant_column(self):
        rng = np.random.default_rng(2)
        R = rng.normal(size=(300, 4))
        R[:, 0] *= 10.0
        state = fit_pca(R - R.mean(axis=0), n_components=2)
        assert abs(state.loadings[0, 0]) > 0.99
        assert state.loadings[0, 0] > 0

    def test_duplicated_column(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=200) * 3.0, rng.normal(size=200)
        state = fit_pca(np.column_stack([a, a, b]), n_components=1)
        assert state.loadings[0, 0] == pytest.approx(state.loadings[0, 1], abs=1e-6)

    def test_rank_deficiency_flagged(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=50), rng.normal(size=50)
        state = fit_pca(np.column_stack([a, a, b]), n_components=10)
        assert state.n_components == 2
        assert state.rank_deficient

    def test_transform_matches_training_scores(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(100, 3))
        y = X @ np.array([1.0, 0.5, 0.0]) + rng.normal(scale=0.1, size=100)
        rescaled, slopes, means = y_aware_rescale(X, y)
        state = fit_pca(rescaled, 3, slopes, means)
        scores = state.transform(X)
        assert np.allclose(scores, (rescaled - rescaled.mean(axis=0)) @ state.loadings.T, atol=1e-9)


class TestPcaModel:
    def test_design_columns(self, panel):
        design = build_pca_design(PRESETS["pca"], panel, 35)
        assert design.lagged.shape == (panel.n_months + 3, panel.n_districts * 3)
        assert design.column_names[0] == f"{panel.districts[0]}_lag3"
        assert not design.lagged_valid[4]
        assert design.lagged_valid[5]

    def test_fit_and_forecast(self, panel, pca_fit):
        assert pca_fit.diagnostics.extra["components"] == [10] * panel.n_districts
        forecasts = PcaModel().forecast(pca_fit, panel, 35, 3, 1000, forecast_rng(2, pca_fit.spec, 35, 3))
        for dist in forecasts.values():
            dist.check_scorable()
            assert dist.target == panel.months[38]

    def test_point_forecast_positive(self, panel, pca_fit):
        assert np.all(PcaModel().point_forecast(pca_fit, panel, 35, 1) > 0)

    def test_recorded_reads(self, panel, pca_fit):
        assert pca_fit.diagnostics.extra[NEWEST_DATUM] == 35
        for h, newest in ((1, 33), (3, 35)):
            forecasts = PcaModel().forecast(pca_fit, panel, 35, h, 1000, np.random.default_rng(0))
            assert {d.newest_datum for d in forecasts.values()} == {newest}

    def test_single_district(self):
        moy = np.arange(40) % 12
        cases = np.random.default_rng(6).poisson(20 * np.exp(0.7 * np.sin(2 * np.pi * moy / 12)))[None, :]
        panel = make_panel(cases)
        spec = ModelSpec(name="pca1", family="pca", offset_lag=None)
        fitted = PcaModel().fit(spec, panel, 39)
        assert fitted.diagnostics.extra["rank_deficient"] == ["D01"]
        forecasts = PcaModel().forecast(fitted, panel, 39, 2, 1000, np.random.default_rng(0))
        assert forecasts["D01"].n_samples == 1000

    def test_too_few_usable_months(self):
        panel = make_panel(np.full((2, 26), 5))
        with pytest.raises(BadInputError):
            PcaModel().fit(ModelSpec(name="pca2", family="pca", offset_lag=None), panel, 25)

    def test_json_round_trip(self, panel, pca_fit):
        restored = FittedModel.from_json(pca_fit.to_json())
        assert np.allclose(PcaModel().point_forecast(restored, panel, 40, 1),
                           PcaModel().point_forecast(pca_fit, panel, 40, 1))
