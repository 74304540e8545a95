"""
Seasonal reference model
log mu = log p + alpha + u_i + eta_{i, m[t]} with iid district effects and a
cyclic month-of-year random walk per district
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from core.errors import ModelFitError
from core.models.base import (
    NEWEST_DATUM, FitDiagnostics, FittedModel, ForecastDistribution, ForecastingModel, ModelSpec,
    to_distributions,
)
from core.models.effects import IIDBlock, seasonal_block
from core.models.inference import (
    Cells, LatentState, fit_latent, forecast_latent, grid_index, mode_linear_predictor,
)
from core.panel.dataset import PanelDataset
from utils.logger import setup_logger, log_fit_event

logger = setup_logger("reference")

MIN_TRAIN_MONTHS = 12


@dataclass(frozen=True)
class ReferenceModelParams:
    """Mode of the reference model"""
    alpha: float
    district_effects: np.ndarray
    month_effects: np.ndarray  # (districts, 12)
    hypers: Dict[str, float]


class ReferenceModel(ForecastingModel):
    """Seasonal baseline every other model is scored against"""

    family = "reference"

    def fit(self, spec: ModelSpec, panel: PanelDataset, train_end: int, jobs: int = 1) -> FittedModel:
        self.check_window(panel, train_end, MIN_TRAIN_MONTHS)
        n = panel.n_districts
        district, t = grid_index(n, range(train_end + 1))
        cells = Cells.from_panel(panel, district, t)
        y = panel.cases[district, t].astype(float)
        offset = np.log(panel.population[district, t])
        X = np.ones((len(y), 1))
        blocks = [IIDBlock(n), seasonal_block(n)]
        origin = str(panel.month_at(train_end))

        try:
            fit = fit_latent(y, X, offset, blocks, cells, label=f"{spec.name}@{origin}")
        except ModelFitError as e:
            log_fit_event(logger, spec.name, origin, "failed", {"error": str(e)})
            raise

        state = LatentState(["intercept"], blocks, fit)
        diagnostics = FitDiagnostics(fit.converged, fit.objective, fit.iterations, fit.gradient_norm,
                                     {"hypers": state.hyper_summary(), NEWEST_DATUM: int(t.max())})
        log_fit_event(logger, spec.name, origin, "converged", diagnostics.to_dict())
        return FittedModel(spec, panel.month_at(train_end), state, diagnostics)

    def _target(self, panel: PanelDataset, origin: int, horizon: int):
        t = origin + horizon
        n = panel.n_districts
        district = np.arange(n)
        cells = Cells.from_panel(panel, district, np.full(n, t))
        offset = np.log(panel.population_padded(t + 1)[:, t])
        return np.ones((n, 1)), offset, cells

    def forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                 n_samples: int, rng: np.random.Generator) -> Dict[str, ForecastDistribution]:
        self.check_origin(panel, origin, horizon, fitted.spec.max_horizon)
        X, offset, cells = self._target(panel, origin, horizon)
        counts = forecast_latent(fitted.state, X, offset, cells, n_samples, rng)
        return to_distributions(panel, origin, horizon, counts)

    def point_forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> np.ndarray:
        X, offset, cells = self._target(panel, origin, horizon)
        return np.exp(mode_linear_predictor(fitted.state, X, offset, cells))

    @staticmethod
    def params(fitted: FittedModel) -> ReferenceModelParams:
        state: LatentState = fitted.state
        district_effects, month_effects = state.effect_values()
        return ReferenceModelParams(
            alpha=float(state.fit.beta[0]),
            district_effects=district_effects,
            month_effects=month_effects.reshape(-1, 12),
            hypers=state.hyper_summary(),
        )

    def fitted_rates(self, fitted: FittedModel, panel: PanelDataset) -> np.ndarray:
        """(districts, training months) fitted mean incidence per person at the mode"""
        train_end = panel.index_of(fitted.train_end)
        district, t = grid_index(panel.n_districts, range(train_end + 1))
        cells = Cells.from_panel(panel, district, t)
        eta = mode_linear_predictor(fitted.state, np.ones((len(t), 1)), np.zeros(len(t)), cells)
        return np.exp(eta).reshape(panel.n_districts, train_end + 1)
