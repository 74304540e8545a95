"""Tests for the endemic-epidemic family"""

import numpy as np
import pytest

from core.errors import BadInputError, SpecError
from core.models.base import NEWEST_DATUM, FittedModel, ModelSpec, forecast_rng
from core.models.hhh4 import (
    Hhh4Layout,
    Hhh4Model,
    Hhh4Params,
    build_hhh4_design,
    expected_path,
    forecast_hhh4,
    mean_decomposition,
    powerlaw_weights,
)
from core.models.registry import PRESETS
from core.synth.generator import simulate_hhh4, synthetic_panel
from tests.conftest import make_panel

PLAIN = ModelSpec(name="plain", family="hhh4", offset_lag=None, district_intercepts=False)


@pytest.fixture(scope="module")
def hhh4_fit(panel):
    return Hhh4Model().fit(PRESETS["hhh4"], panel, 35)


def _params(lam=0.5, phi=0.1, decay=2.0):
    return Hhh4Params(endemic=np.array([np.log(1e-4), 0.0, 0.0]), epidemic=np.array([np.log(lam)]),
                      neighbourhood=np.array([np.log(phi)]), decay=decay, psi=5.0)


class TestPowerLawWeights:
    def test_steep_decay_keeps_first_order(self):
        order = make_panel(np.zeros((4, 2), dtype=int)).order_matrix()
        W = powerlaw_weights(order, 20.0)
        assert W[0, 1] > 0.99
        assert W[1, 0] + W[1, 2] > 0.99

    def test_complete_graph_is_uniform(self):
        names = ["A", "B", "C", "D"]
        edges = [(a, b) for k, a in enumerate(names) for b in names[k + 1:]]
        order = make_panel(np.zeros((4, 2), dtype=int), edges=edges, districts=names).order_matrix()
        W = powerlaw_weights(order, 1.7)
        off = ~np.eye(4, dtype=bool)
        assert np.allclose(W[off], 1.0 / 3.0)
        assert np.allclose(np.diag(W), 0.0)

    def test_rows_sum_to_one(self):
        order = make_panel(np.zeros((5, 2), dtype=int)).order_matrix()
        W = powerlaw_weights(order, 1.0)
        assert np.allclose(W.sum(axis=1), 1.0)
        assert W[0, 1] == pytest.approx(W[0, 2] * 2.0)

    def test_vector_decay(self):
        order = make_panel(np.zeros((3, 2), dtype=int)).order_matrix()
        assert powerlaw_weights(order, np.array([1.0, 2.0])).shape == (2, 3, 3)

    def test_decay_must_be_positive(self):
        order = make_panel(np.zeros((3, 2), dtype=int)).order_matrix()
        with pytest.raises(SpecError):
            powerlaw_weights(order, 0.0)


class TestMeanDecomposition:
    def _design(self, cases):
        panel = make_panel(cases)
        design = build_hhh4_design(PLAIN, panel, panel.n_months - 1)
        return design, Hhh4Layout(panel.n_districts, (), district_intercepts=False)

    def test_components(self):
        cases = np.array([[10, 20, 30], [40, 50, 60], [70, 80, 90]])
        design, layout = self._design(cases)
        endemic, epidemic, neighbourhood, total = mean_decomposition(_params(), layout, design, 1, 2)
        assert endemic == pytest.approx(10.0)
        assert epidemic == pytest.approx(0.5 * 50)
        assert neighbourhood == pytest.approx(0.1 * 0.5 * (20 + 80))
        assert total == pytest.approx(endemic + epidemic + neighbourhood)

    def test_endemic_only(self):
        cases = np.array([[10, 20, 30], [40, 50, 60], [70, 80, 90]])
        design, layout = self._design(cases)
        params = _params(lam=1e-20, phi=1e-20)
        endemic, epidemic, neighbourhood, total = mean_decomposition(params, layout, design, 0, 1)
        assert total == pytest.approx(endemic, rel=1e-9)

    def test_zero_history(self):
        design, layout = self._design(np.zeros((3, 4), dtype=int))
        _, epidemic, neighbourhood, total = mean_decomposition(_params(), layout, design, 2, 3)
        assert epidemic == 0.0
        assert neighbourhood == 0.0
        assert total == pytest.approx(10.0)

    def test_single_district_has_no_neighbourhood(self):
        panel = make_panel([[5, 6, 7]])
        design = build_hhh4_design(PLAIN, panel, 2)
        layout = Hhh4Layout(1, (), district_intercepts=False)
        assert not layout.has_neighbourhood
        params = Hhh4Params(endemic=np.array([np.log(1e-4), 0.0, 0.0]), epidemic=np.array([np.log(0.5)]),
                            neighbourhood=np.array([]), decay=1.0, psi=5.0)
        _, epidemic, neighbourhood, total = mean_decomposition(params, layout, design, 0, 2)
        assert neighbourhood == 0.0
        assert total == pytest.approx(10.0 + 3.0)

    def test_first_month_rejected(self):
        design, layout = self._design(np.ones((3, 3), dtype=int))
        with pytest.raises(BadInputError):
            mean_decomposition(_params(), layout, design, 0, 0)

    def test_invalid_params(self):
        with pytest.raises(SpecError):
            Hhh4Params(endemic=np.zeros(3), epidemic=np.zeros(1), neighbourhood=np.zeros(1), decay=1.0, psi=0.0)

    def test_vector_round_trip(self):
        layout = Hhh4Layout(3, (), district_intercepts=False)
        theta = _params().to_vector(layout)
        assert len(theta) == layout.size == len(layout.names())
        assert Hhh4Params.from_vector(layout, theta).decay == pytest.approx(2.0)


class TestHhh4Model:
    def test_fit(self, hhh4_fit):
        assert hhh4_fit.diagnostics.converged
        assert hhh4_fit.diagnostics.extra["psi"] > 0
        coefs = hhh4_fit.state.coefficients()
        assert "endemic.tmin_lag3" in coefs and "epidemic.rain_lag3" in coefs

    def test_forecast(self, panel, hhh4_fit):
        forecasts = Hhh4Model().forecast(hhh4_fit, panel, 35, 3, 1000, forecast_rng(1, hhh4_fit.spec, 35, 3))
        assert list(forecasts) == panel.districts
        for dist in forecasts.values():
            dist.check_scorable()
            assert dist.target == panel.months[38]

    def test_expected_path_matches_simulation(self, panel, hhh4_fit):
        mean = expected_path(hhh4_fit, panel, 35, 3)
        draws = forecast_hhh4(hhh4_fit, panel, 35, 3, 20000, np.random.default_rng(4), degenerate=True)
        assert np.allclose(draws.mean(axis=0), mean, rtol=0.05)

    def test_negative_binomial_variance(self, panel, hhh4_fit):
        mean = expected_path(hhh4_fit, panel, 35, 1)
        psi = hhh4_fit.diagnostics.extra["psi"]
        draws = forecast_hhh4(hhh4_fit, panel, 35, 1, 20000, np.random.default_rng(5), degenerate=True)
        assert np.allclose(draws.var(axis=0), mean + mean ** 2 / psi, rtol=0.15)

    def test_recorded_reads(self, panel, hhh4_fit):
        assert hhh4_fit.diagnostics.extra[NEWEST_DATUM] == 35
        # a path starts from the origin's counts, so it never reads less than the origin
        for h in (1, 3):
            forecasts = Hhh4Model().forecast(hhh4_fit, panel, 35, h, 1000, np.random.default_rng(0))
            assert {d.newest_datum for d in forecasts.values()} == {35}

    def test_window_too_short(self, panel):
        with pytest.raises(BadInputError):
            Hhh4Model().fit(PRESETS["hhh4"], panel, 12)

    def test_json_round_trip(self, panel, hhh4_fit):
        restored = FittedModel.from_json(hhh4_fit.to_json())
        assert np.allclose(expected_path(restored, panel, 40, 2), expected_path(hhh4_fit, panel, 40, 2))


@pytest.mark.slow
class TestRecovery:
    def test_parameters_recovered(self):
        template = synthetic_panel(n_districts=9, n_months=144, seed=8, n_stations=4, grid_size=3).panel
        truth = Hhh4Params(endemic=np.array([np.log(1e-4), 0.6, -0.4]), epidemic=np.array([np.log(0.4)]),
                           neighbourhood=np.array([np.log(0.15)]), decay=2.0, psi=6.0)
        panel = simulate_hhh4(template, truth, seed=3)
        fitted = Hhh4Model().fit(PLAIN, panel, panel.n_months - 1)
        params = fitted.state.params
        assert np.exp(params.epidemic[0]) == pytest.approx(0.4, abs=0.1)
        assert params.endemic[1] == pytest.approx(0.6, abs=0.2)
        assert params.psi == pytest.approx(6.0, rel=0.35)
