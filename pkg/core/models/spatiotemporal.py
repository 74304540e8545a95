"""
Hierarchical Poisson spatiotemporal regression
log mu = log p + alpha + log((Y[t-L] + 1) / p) + sum_k beta_k X_k + eta_{i,m[t]} + delta_{a[t]} + theta_i
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from core.errors import BadInputError, MissingCovariateError, ModelFitError, SpecError
from core.models.base import (
    NEWEST_DATUM, FitDiagnostics, FittedModel, ForecastDistribution, ForecastingModel, ModelSpec,
    EffectsSpec, to_distributions,
)
from core.models.effects import (
    AR1Block, BYM2Block, EffectBlock, IIDBlock, NULL_TOL, StructuredBlock,
    besag_structure, scaled_basis, seasonal_block,
)
from core.models.inference import (
    Cells, LatentState, fit_latent, forecast_latent, mode_linear_predictor,
)
from core.panel.dataset import PanelDataset
from core.panel.features import (
    FeatureMatrix, combine, cumulative_incidence, empty_features, lag_covariate,
    lagged_offset_term, standardize,
)
from utils.logger import setup_logger, log_fit_event

logger = setup_logger("spatiotemporal")

MIN_TRAIN_MONTHS = 24


@dataclass(frozen=True)
class StSpec:
    """Design and effect structure of one spatiotemporal model"""
    covariates: Tuple[str, ...] = ()
    covariate_lag: int = 3
    cumulative_windows: Tuple[int, ...] = ()
    cumulative_lag: int = 3
    offset_lag: Optional[int] = 3
    effects: EffectsSpec = EffectsSpec()
    standardize: bool = True

    @classmethod
    def from_model_spec(cls, spec: ModelSpec) -> "StSpec":
        return cls(
            covariates=tuple(spec.covariates),
            covariate_lag=spec.covariate_lag,
            cumulative_windows=tuple(spec.cumulative_windows),
            cumulative_lag=spec.case_lag,
            offset_lag=spec.offset_lag,
            effects=spec.effects,
            standardize=spec.standardize,
        )

    def data_lags(self) -> List[int]:
        lags = []
        if self.covariates:
            lags.append(self.covariate_lag)
        if self.cumulative_windows:
            lags.append(self.cumulative_lag)
        if self.offset_lag is not None:
            lags.append(self.offset_lag)
        return lags


@dataclass(frozen=True)
class BesagStructure:
    """
    Intrinsic CAR precision of an adjacency graph: R = degree - adjacency,
    scaled so the geometric mean of the generalized-inverse diagonal is one.
    """
    structure: np.ndarray
    scale: float
    basis: np.ndarray
    n_components: int

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "BesagStructure":
        A = np.asarray(adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise SpecError("Adjacency must be a symmetric square matrix")
        if A.shape[0] < 2:
            raise SpecError("A Besag effect needs at least two districts")
        R = besag_structure(A)
        if not np.allclose(R.sum(axis=1), 0.0):
            raise SpecError("Besag structure rows must sum to zero")

        n_components = nx.number_connected_components(nx.from_numpy_array(A))
        vals = np.linalg.eigvalsh(R)
        deficiency = int(np.sum(vals <= NULL_TOL * max(1.0, float(vals.max()))))
        if deficiency != n_components:
            raise SpecError(
                f"Besag structure has rank deficiency {deficiency}, expected {n_components}"
            )
        basis, scale = scaled_basis(R)
        return cls(R, scale, basis, n_components)

    @property
    def precision(self) -> np.ndarray:
        return self.scale * self.structure

    def penalty(self, theta: np.ndarray) -> float:
        """0.5 * theta' Q theta, i.e. half the scaled sum of squared neighbour differences"""
        theta = np.asarray(theta, dtype=float)
        return 0.5 * float(theta @ self.precision @ theta)

    def block(self) -> StructuredBlock:
        return StructuredBlock(self.basis, 1, "district", "besag")


@dataclass(frozen=True)
class StDesign:
    """Design of a spatiotemporal model on a padded month axis"""
    spec: StSpec
    horizon: int
    features: FeatureMatrix
    offset_term: Optional[FeatureMatrix]
    log_population: np.ndarray  # (n, N)
    years: np.ndarray  # (N,)
    months: np.ndarray  # (N,)

    @property
    def columns(self) -> Tuple[str, ...]:
        offset = () if self.offset_term is None else self.offset_term.names
        return offset + self.features.names

    @property
    def coef_names(self) -> List[str]:
        return ["intercept", *self.features.names]

    @property
    def n_total(self) -> int:
        return self.features.n_total

    def rows_valid(self) -> np.ndarray:
        valid = self.features.rows_valid()
        if self.offset_term is not None:
            valid = valid & self.offset_term.rows_valid()
        return valid

    def offset(self) -> np.ndarray:
        """Known part of the log mean count: log p plus the lagged offset term"""
        if self.offset_term is None:
            return self.log_population
        return self.log_population + self.offset_term.values[:, :, 0]

    def newest_datum(self, district: np.ndarray, t: np.ndarray) -> int:
        """Newest panel month the covariates and offset term read at cells (district, t)"""
        newest = self.features.newest_datum(district, t)
        if self.offset_term is not None:
            newest = max(newest, self.offset_term.newest_datum(district, t))
        return newest

    def cells(self, district: np.ndarray, t: np.ndarray) -> Cells:
        return Cells(np.asarray(district, dtype=int), self.years[t], self.months[t])

    def first_invalid(self, i: int, t: int) -> Optional[str]:
        """Name of the first feature undefined at (i, t)"""
        if self.offset_term is not None and not self.offset_term.valid[i, t, 0]:
            return self.offset_term.names[0]
        for k, name in enumerate(self.features.names):
            if not self.features.valid[i, t, k]:
                return name
        return None


def build_design(spec, panel: PanelDataset, horizon: int, n_total: Optional[int] = None) -> StDesign:
    """
    Design columns for every covariate in the spec. Every data lag must be at least
    the horizon so a forecast never reads past its origin.
    """
    if isinstance(spec, ModelSpec):
        spec.check_panel(panel)
        max_h = max(horizon, spec.max_horizon)
        spec = StSpec.from_model_spec(spec)
    else:
        missing = [c for c in spec.covariates if c not in panel.covariates]
        if missing:
            raise SpecError(f"Covariates not in panel: {', '.join(missing)}")
        max_h = horizon
    if horizon < 1:
        raise SpecError(f"Horizon must be positive, got {horizon}")
    short = [L for L in spec.data_lags() if L < max_h]
    if short:
        raise SpecError(f"Lag {min(short)} is shorter than the forecast horizon {max_h}")

    n_total = panel.n_months + horizon if n_total is None else int(n_total)
    parts = [lag_covariate(panel, c, spec.covariate_lag, n_total) for c in spec.covariates]
    parts += [cumulative_incidence(panel, w, spec.cumulative_lag, n_total) for w in spec.cumulative_windows]
    features = combine(parts) if parts else empty_features(panel, n_total)
    offset_term = None
    if spec.offset_lag is not None:
        offset_term = lagged_offset_term(panel, spec.offset_lag, n_total)

    years, months = panel.calendar(n_total)
    return StDesign(
        spec=spec,
        horizon=horizon,
        features=features,
        offset_term=offset_term,
        log_population=np.log(panel.population_padded(n_total)),
        years=years,
        months=months,
    )


def _scaled_features(design: StDesign, train_end: int) -> np.ndarray:
    """(n, N, k) covariate values, standardized on the training months when the spec asks"""
    if design.spec.standardize and design.features.n_features:
        return standardize(design.features, slice(0, train_end + 1)).values
    return design.features.values


def _design_rows(design: StDesign, train_end: int, district: np.ndarray,
                 t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values = _scaled_features(design, train_end)
    X = np.hstack([np.ones((len(t), 1)), values[district, t, :]])
    return X, design.offset()[district, t]


def log_mean(fitted: FittedModel, design: StDesign, i: int, t: int) -> float:
    """Log mean count at cell (i, t) with every parameter at its mode"""
    train_end = int((fitted.train_end - design.features.start).n)
    district, month = np.array([i]), np.array([t])
    X, offset = _design_rows(design, train_end, district, month)
    return float(mode_linear_predictor(fitted.state, X, offset, design.cells(district, month))[0])


def effect_blocks(spec: StSpec, panel: PanelDataset, first_year: int, last_year: int) -> List[EffectBlock]:
    n = panel.n_districts
    blocks: List[EffectBlock] = []
    if spec.effects.seasonal:
        blocks.append(seasonal_block(n))
    if spec.effects.temporal != "none":
        groups = n if spec.effects.temporal == "ar1_district" else 1
        blocks.append(AR1Block(first_year, last_year - first_year + 1, groups, "ar1"))
    if spec.effects.spatial == "iid":
        blocks.append(IIDBlock(n))
    elif spec.effects.spatial in ("besag", "bym2"):
        if n < 2:
            raise SpecError(f"A {spec.effects.spatial} effect needs at least two districts")
        A = panel.adjacency.adjacency_matrix(panel.districts)
        if spec.effects.spatial == "besag":
            blocks.append(BesagStructure.from_adjacency(A).block())
        else:
            blocks.append(BYM2Block(A))
    return blocks


class SpatiotemporalModel(ForecastingModel):
    """Poisson latent Gaussian model with seasonal, temporal and spatial effects"""

    family = "spatiotemporal"

    def fit(self, spec: ModelSpec, panel: PanelDataset, train_end: int, jobs: int = 1) -> FittedModel:
        self.check_window(panel, train_end, MIN_TRAIN_MONTHS)
        design = build_design(spec, panel, spec.max_horizon)
        st = design.spec

        valid = design.rows_valid()[:, :train_end + 1]
        district, t = np.nonzero(valid)
        if len(t) == 0:
            raise BadInputError(f"{spec.name}: no training cell has every covariate defined")

        X, offset = _design_rows(design, train_end, district, t)
        y = panel.cases[district, t].astype(float)
        cells = design.cells(district, t)
        blocks = effect_blocks(st, panel, int(cells.year.min()), int(design.years[train_end]))
        origin = str(panel.month_at(train_end))

        try:
            fit = fit_latent(y, X, offset, blocks, cells, label=f"{spec.name}@{origin}")
        except ModelFitError as e:
            log_fit_event(logger, spec.name, origin, "failed", {"error": str(e)})
            raise

        state = LatentState(design.coef_names, blocks, fit)
        diagnostics = FitDiagnostics(
            fit.converged, fit.objective, fit.iterations, fit.gradient_norm,
            {"hypers": state.hyper_summary(), "n_cells": int(len(y)), "columns": list(design.columns),
             NEWEST_DATUM: max(int(t.max()), design.newest_datum(district, t))},
        )
        log_fit_event(logger, spec.name, origin, "converged", diagnostics.to_dict())
        return FittedModel(spec, panel.month_at(train_end), state, diagnostics)

    def _target(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int):
        design = build_design(fitted.spec, panel, horizon)
        t = origin + horizon
        for i, d in enumerate(panel.districts):
            name = design.first_invalid(i, t)
            if name is not None:
                logger.error(f"Missing {name} for {d} at {panel.month_at(t)}")
                raise MissingCovariateError(d, str(panel.month_at(t)), name)

        train_end = panel.index_of(fitted.train_end)
        district = np.arange(panel.n_districts)
        month = np.full(panel.n_districts, t)
        X, offset = _design_rows(design, train_end, district, month)
        return X, offset, design.cells(district, month), design.newest_datum(district, month)

    def forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                 n_samples: int, rng: np.random.Generator) -> Dict[str, ForecastDistribution]:
        self.check_origin(panel, origin, horizon, fitted.spec.max_horizon)
        X, offset, cells, newest = self._target(fitted, panel, origin, horizon)
        counts = forecast_latent(fitted.state, X, offset, cells, n_samples, rng)
        return to_distributions(panel, origin, horizon, counts, newest)

    def point_forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> np.ndarray:
        X, offset, cells, _ = self._target(fitted, panel, origin, horizon)
        return np.exp(mode_linear_predictor(fitted.state, X, offset, cells))

    @staticmethod
    def effects(fitted: FittedModel) -> Dict[str, np.ndarray]:
        """Effect values at the mode keyed by block name"""
        state: LatentState = fitted.state
        return {b.name: v for b, v in zip(state.blocks, state.effect_values())}

    @staticmethod
    def coefficients(fitted: FittedModel) -> Dict[str, float]:
        return fitted.state.coefficients()
