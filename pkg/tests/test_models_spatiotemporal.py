"""Tests for the spatiotemporal Poisson family"""

import numpy as np
import pytest

from core.errors import BadInputError, MissingCovariateError, SpecError
from core.models.base import NEWEST_DATUM, EffectsSpec, FittedModel, ModelSpec, forecast_rng
from core.models.registry import PRESETS
from core.models.spatiotemporal import BesagStructure, SpatiotemporalModel, StSpec, build_design
from core.panel.dataset import PanelDataset
from core.synth.generator import simulate_latent, synthetic_panel
from tests.conftest import make_panel

GRID_EDGES = [(0, 1), (1, 2), (3, 4), (4, 5), (6, 7), (7, 8), (0, 3), (3, 6), (1, 4), (4, 7), (2, 5), (5, 8)]


def _grid_panel(cases):
    names = [f"D{k + 1:02d}" for k in range(9)]
    return make_panel(cases, edges=[(names[a], names[b]) for a, b in GRID_EDGES])


@pytest.fixture(scope="module")
def st2_fit(panel):
    return SpatiotemporalModel().fit(PRESETS["st2"], panel, 35)


class TestDesign:
    def test_st2_columns(self, panel):
        design = build_design(PRESETS["st2"], panel, 3)
        assert design.columns == ("offset_lag3", "tmin_lag3", "rain_lag3")
        assert design.coef_names == ["intercept", "tmin_lag3", "rain_lag3"]

    def test_st3_columns(self, long_panel):
        design = build_design(PRESETS["st3"], long_panel, 3)
        assert design.columns[-3:] == ("cuminc12_lag3", "cuminc24_lag3", "cuminc36_lag3")
        # first month with a full 36-month window three months back
        assert not design.rows_valid()[:, 37].any()
        assert design.rows_valid()[:, 38].all()

    def test_short_lag_rejected(self, panel):
        with pytest.raises(SpecError):
            build_design(StSpec(covariates=("tmin",), covariate_lag=1, offset_lag=None), panel, 3)

    def test_short_case_lag_in_spec(self):
        with pytest.raises(SpecError):
            ModelSpec(name="leaky", family="spatiotemporal", case_lag=1, horizons=(1, 2, 3))

    def test_unknown_covariate(self, panel):
        with pytest.raises(SpecError):
            build_design(StSpec(covariates=("humidity",)), panel, 3)

    def test_empty_covariates(self, panel):
        design = build_design(StSpec(offset_lag=None), panel, 3)
        assert design.columns == ()
        assert design.coef_names == ["intercept"]
        assert design.rows_valid().all()

    def test_offset_is_log_population_without_term(self, panel):
        design = build_design(StSpec(offset_lag=None), panel, 1)
        assert np.allclose(design.offset()[:, :panel.n_months], np.log(panel.population))

    def test_padded_axis(self, panel):
        design = build_design(PRESETS["st2"], panel, 3)
        assert design.n_total == panel.n_months + 3
        assert design.rows_valid()[:, -1].all()


class TestBesagStructure:
    def test_path_graph(self):
        A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        besag = BesagStructure.from_adjacency(A)
        assert np.allclose(besag.structure, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
        assert besag.n_components == 1
        assert besag.penalty(np.full(3, 2.5)) == pytest.approx(0.0, abs=1e-12)
        assert besag.penalty(np.array([1.0, 0.0, 0.0])) > 0

    def test_two_components(self):
        A = np.zeros((4, 4))
        A[0, 1] = A[1, 0] = A[2, 3] = A[3, 2] = 1.0
        assert BesagStructure.from_adjacency(A).n_components == 2

    def test_single_district(self):
        with pytest.raises(SpecError):
            BesagStructure.from_adjacency(np.zeros((1, 1)))

    def test_asymmetric(self):
        A = np.array([[0, 1], [0, 0]], dtype=float)
        with pytest.raises(SpecError):
            BesagStructure.from_adjacency(A)

    def test_hotspot_borrows_strength(self):
        cases = np.full((9, 24), 20)
        cases[4] = 200
        panel = _grid_panel(cases)
        spec = ModelSpec(name="besag", family="spatiotemporal", offset_lag=None,
                         effects=EffectsSpec(seasonal=False, temporal="none", spatial="besag"))
        fitted = SpatiotemporalModel().fit(spec, panel, 23)
        theta = SpatiotemporalModel.effects(fitted)["besag"]
        assert int(np.argmax(theta)) == 4
        assert theta[[1, 3, 5, 7]].mean() > theta[[0, 2, 6, 8]].mean()

    def test_single_district_spatial_effect(self):
        panel = make_panel(np.full((1, 30), 10))
        spec = ModelSpec(name="one", family="spatiotemporal", offset_lag=None,
                         effects=EffectsSpec(spatial="bym2"))
        with pytest.raises(SpecError):
            SpatiotemporalModel().fit(spec, panel, 29)


class TestSpatiotemporalModel:
    def test_fit_diagnostics(self, st2_fit):
        assert st2_fit.diagnostics.converged
        assert st2_fit.diagnostics.extra["columns"] == ["offset_lag3", "tmin_lag3", "rain_lag3"]
        assert set(SpatiotemporalModel.coefficients(st2_fit)) == {"intercept", "tmin_lag3", "rain_lag3"}
        assert {"season", "ar1", "bym2"} <= set(SpatiotemporalModel.effects(st2_fit))

    def test_forecast(self, panel, st2_fit):
        model = SpatiotemporalModel()
        forecasts = model.forecast(st2_fit, panel, 35, 3, 1000, forecast_rng(3, st2_fit.spec, 35, 3))
        assert list(forecasts) == panel.districts
        for d in panel.districts:
            dist = forecasts[d]
            dist.check_scorable()
            assert dist.target == panel.months[38]
            assert np.all(dist.samples >= 0)

    def test_point_forecast_tracks_samples(self, panel, st2_fit):
        model = SpatiotemporalModel()
        point = model.point_forecast(st2_fit, panel, 35, 1)
        forecasts = model.forecast(st2_fit, panel, 35, 1, 4000, forecast_rng(3, st2_fit.spec, 35, 1))
        medians = np.array([np.median(forecasts[d].samples) for d in panel.districts])
        assert np.all(point > 0)
        assert np.corrcoef(point, medians)[0, 1] > 0.9

    def test_forecast_from_last_month(self, panel, st2_fit):
        forecasts = SpatiotemporalModel().forecast(st2_fit, panel, panel.n_months - 1, 3, 1000,
                                                   np.random.default_rng(0))
        assert all(d.target == panel.months[-1] + 3 for d in forecasts.values())

    def test_missing_covariate(self, panel, st2_fit):
        tmin = panel.covariates["tmin"].copy()
        tmin[2, 40] = np.nan
        gappy = PanelDataset(panel.districts, panel.months, panel.cases, panel.population, panel.adjacency,
                             {**panel.covariates, "tmin": tmin}, dict(panel.covariate_units))
        with pytest.raises(MissingCovariateError):
            SpatiotemporalModel().forecast(st2_fit, gappy, 40, 3, 1000, np.random.default_rng(0))

    def test_recorded_reads(self, panel, st2_fit):
        assert st2_fit.diagnostics.extra[NEWEST_DATUM] == 35
        for h, newest in ((1, 33), (3, 35)):
            forecasts = SpatiotemporalModel().forecast(st2_fit, panel, 35, h, 1000, np.random.default_rng(0))
            assert {d.newest_datum for d in forecasts.values()} == {newest}

    def test_window_too_short(self, panel):
        with pytest.raises(BadInputError):
            SpatiotemporalModel().fit(PRESETS["st1"], panel, 10)

    def test_json_round_trip(self, panel, st2_fit):
        restored = FittedModel.from_json(st2_fit.to_json())
        model = SpatiotemporalModel()
        assert np.allclose(model.point_forecast(restored, panel, 40, 2),
                           model.point_forecast(st2_fit, panel, 40, 2))


@pytest.mark.slow
class TestRecovery:
    def test_weather_coefficients_covered(self):
        template = synthetic_panel(n_districts=20, n_months=120, seed=2, n_stations=4, grid_size=3).panel
        betas = {"tmin": 0.3, "rain": 0.2}
        spec = ModelSpec(name="recovery", family="spatiotemporal", covariates=("tmin", "rain"), offset_lag=None,
                         effects=EffectsSpec(seasonal=True, temporal="none", spatial="iid"))
        covered = np.zeros(2)
        n_seeds = 50
        for seed in range(n_seeds):
            panel, _ = simulate_latent(template, np.log(20.0 / 100000.0), betas, seed=seed)
            fitted = SpatiotemporalModel().fit(spec, panel, panel.n_months - 1)
            fit = fitted.state.fit
            sd = np.sqrt(np.diag(fit.covariance())[1:3])
            truth = np.array(list(betas.values()))
            covered += np.abs(fit.beta[1:3] - truth) <= 1.96 * sd
        assert np.all(covered / n_seeds >= 0.9)
