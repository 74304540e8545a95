"""
Supervised principal components regression
Lagged log-incidence of every district, rescaled by its univariate slope against the
target district, compressed to the leading components of a per-district PCA and fed
to a seasonal Poisson regression with an AR(1) year effect.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.decomposition import PCA

from core.errors import BadInputError, MissingCovariateError, ModelFitError
from core.models.base import (
    NEWEST_DATUM, FitDiagnostics, FittedModel, ForecastDistribution, ForecastingModel, ModelSpec,
    to_distributions,
)
from core.models.effects import AR1Block
from core.models.inference import (
    Cells, LatentState, fit_latent, forecast_latent, mode_linear_predictor,
)
from core.panel.dataset import PanelDataset
from core.panel.features import (
    combine, empty_features, lag_covariate, log_incidence, newest_datum, shift, standardize,
)
from utils.logger import setup_logger, log_fit_event

logger = setup_logger("pca")

MIN_TRAIN_MONTHS = 24


def y_aware_rescale(features: np.ndarray, target: np.ndarray,
                    window: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Multiply each column by its univariate least-squares slope against the target and
    centre it. Slopes and means come from the window rows only.

    Returns:
        (rescaled matrix over all rows, slopes, means)
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(target, dtype=float)
    window = np.ones(len(X), dtype=bool) if window is None else np.asarray(window, dtype=bool)
    Xw, yw = X[window], y[window]

    xc = Xw - Xw.mean(axis=0)
    yc = yw - yw.mean()
    var = (xc ** 2).sum(axis=0)
    slopes = np.divide(xc.T @ yc, var, out=np.zeros(X.shape[1]), where=var > 1e-12 * max(1.0, var.max(initial=0.0)))
    means = (Xw * slopes).mean(axis=0)
    return X * slopes - means, slopes, means


@dataclass
class YAwarePcaState:
    """Slopes, centring means, component loadings (components x columns) and explained variance"""
    slopes: np.ndarray
    means: np.ndarray
    loadings: np.ndarray
    explained_variance: np.ndarray
    rank_deficient: bool = False

    @property
    def n_components(self) -> int:
        return self.loadings.shape[0]

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Component scores of raw feature rows"""
        return (np.asarray(features, dtype=float) * self.slopes - self.means) @ self.loadings.T

    def to_dict(self) -> dict:
        return {"slopes": self.slopes.tolist(), "means": self.means.tolist(),
                "loadings": self.loadings.tolist(), "explained_variance": self.explained_variance.tolist(),
                "rank_deficient": self.rank_deficient}

    @classmethod
    def from_dict(cls, data: dict) -> "YAwarePcaState":
        slopes = np.asarray(data["slopes"], dtype=float)
        loadings = np.asarray(data["loadings"], dtype=float).reshape(-1, len(slopes))
        return cls(slopes, np.asarray(data["means"], dtype=float), loadings,
                   np.asarray(data["explained_variance"], dtype=float), bool(data["rank_deficient"]))


def fit_pca(rescaled: np.ndarray, n_components: int = 10,
            slopes: Optional[np.ndarray] = None, means: Optional[np.ndarray] = None) -> YAwarePcaState:
    """
    Leading principal components of the rescaled matrix. Each loading vector has its
    largest-magnitude entry positive. With fewer than n_components independent
    directions, all available components are kept and the state is flagged.
    """
    R = np.asarray(rescaled, dtype=float)
    m, K = R.shape
    rank = int(np.linalg.matrix_rank(R - R.mean(axis=0))) if m > 1 else 0
    k = min(n_components, rank)
    deficient = k < n_components
    if deficient:
        logger.warning(f"Rescaled matrix has rank {rank}; keeping {k} of {n_components} components")

    slopes = np.ones(K) if slopes is None else slopes
    means = np.zeros(K) if means is None else means
    if k == 0:
        return YAwarePcaState(slopes, means, np.zeros((0, K)), np.zeros(0), True)

    pca = PCA(n_components=k, svd_solver="full")
    pca.fit(R)
    loadings = pca.components_.copy()
    peak = np.argmax(np.abs(loadings), axis=1)
    signs = np.sign(loadings[np.arange(k), peak])
    loadings *= np.where(signs == 0, 1.0, signs)[:, None]
    return YAwarePcaState(slopes, means, loadings, pca.explained_variance_.copy(), deficient)


@dataclass(frozen=True)
class PcaDesign:
    """Cross-district lag matrix, standardized weather and calendar on a padded axis"""
    lagged: np.ndarray  # (N, n * len(lags))
    lagged_valid: np.ndarray  # (N,)
    column_names: Tuple[str, ...]
    z: np.ndarray  # (n, T) standardized log-incidence
    weather: np.ndarray  # (n, N, K)
    weather_valid: np.ndarray  # (n, N, K)
    weather_names: Tuple[str, ...]
    harmonics: np.ndarray  # (N, 2)
    log_population: np.ndarray  # (n, N)
    years: np.ndarray
    months: np.ndarray
    lagged_lags: Tuple[int, ...] = ()
    weather_lags: Tuple[Optional[int], ...] = ()

    def weather_row_valid(self, i: int, t: np.ndarray) -> np.ndarray:
        if self.weather.shape[2] == 0:
            return np.ones(len(t), dtype=bool)
        return self.weather_valid[i, t].all(axis=1)

    def newest_datum(self, i: int, t: np.ndarray) -> int:
        """Newest panel month the lag matrix and district i's weather read at months t"""
        t = np.asarray(t, dtype=int)
        district = np.full(len(t), i)
        lagged_valid = np.repeat(self.lagged_valid[None, :, None], len(self.lagged_lags), axis=2)
        return max(newest_datum(lagged_valid, self.lagged_lags, np.zeros_like(t), t),
                   newest_datum(self.weather_valid, self.weather_lags, district, t))


def _standardized_log_incidence(panel: PanelDataset, train_end: int) -> np.ndarray:
    z = log_incidence(panel)
    ref = z[:, :train_end + 1]
    mean = ref.mean(axis=1, keepdims=True)
    sd = ref.std(axis=1, ddof=1, keepdims=True) if ref.shape[1] > 1 else np.zeros_like(mean)
    flat = ~(sd > 1e-12)
    return np.where(flat, 0.0, (z - mean) / np.where(flat, 1.0, sd))


def build_pca_design(spec: ModelSpec, panel: PanelDataset, train_end: int,
                     n_total: Optional[int] = None) -> PcaDesign:
    spec.check_panel(panel)
    n_total = panel.n_months + spec.max_horizon if n_total is None else int(n_total)
    z = _standardized_log_incidence(panel, train_end)

    columns, names, valid = [], [], np.ones(n_total, dtype=bool)
    for L in spec.pca_lags:
        lagged, ok = shift(z, L, n_total)
        for j, d in enumerate(panel.districts):
            columns.append(lagged[j])
            names.append(f"{d}_lag{L}")
        valid &= ok.all(axis=0)

    parts = [lag_covariate(panel, c, spec.covariate_lag, n_total) for c in spec.covariates]
    weather = combine(parts) if parts else empty_features(panel, n_total)
    if weather.n_features and spec.standardize:
        weather = standardize(weather, slice(0, train_end + 1))

    years, months = panel.calendar(n_total)
    angle = 2.0 * np.pi * months / 12.0
    return PcaDesign(
        lagged=np.stack(columns, axis=1),
        lagged_valid=valid,
        column_names=tuple(names),
        z=z,
        weather=np.nan_to_num(weather.values),
        weather_valid=weather.valid,
        weather_names=weather.names,
        harmonics=np.stack([np.sin(angle), np.cos(angle)], axis=1),
        log_population=np.log(panel.population_padded(n_total)),
        years=years,
        months=months,
        lagged_lags=tuple(int(L) for L in spec.pca_lags),
        weather_lags=weather.lags,
    )


@dataclass
class DistrictPcr:
    """Per-district components and Poisson regression"""
    pca: YAwarePcaState
    regression: LatentState

    def to_dict(self) -> dict:
        return {"pca": self.pca.to_dict(), "regression": self.regression.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "DistrictPcr":
        return cls(YAwarePcaState.from_dict(data["pca"]), LatentState.from_dict(data["regression"]))


@dataclass
class PcaModelState:
    districts: List[str]
    fits: List[DistrictPcr]

    def to_dict(self) -> dict:
        return {"districts": list(self.districts), "fits": [f.to_dict() for f in self.fits]}

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModelState":
        return cls(list(data["districts"]), [DistrictPcr.from_dict(f) for f in data["fits"]])


def _regression_rows(design: PcaDesign, pcr_pca: YAwarePcaState, i: int,
                     t: np.ndarray) -> np.ndarray:
    scores = pcr_pca.transform(design.lagged[t])
    return np.hstack([np.ones((len(t), 1)), scores, design.harmonics[t], design.weather[i, t, :]])


def _coef_names(design: PcaDesign, n_components: int) -> List[str]:
    return (["intercept"] + [f"pc{k + 1}" for k in range(n_components)]
            + ["season_sin", "season_cos"] + list(design.weather_names))


def training_rows(design: PcaDesign, i: int, train_end: int) -> np.ndarray:
    """Months up to train_end where district i's lag matrix and weather are defined"""
    t_all = np.arange(train_end + 1)
    return t_all[design.lagged_valid[:train_end + 1] & design.weather_row_valid(i, t_all)]


def fit_pcr(district: str, panel: PanelDataset, design: PcaDesign, spec: ModelSpec,
            train_end: int) -> DistrictPcr:
    """Rescale, decompose and regress for one target district on months up to train_end"""
    i = panel.district_index(district)
    t = training_rows(design, i, train_end)
    if len(t) < MIN_TRAIN_MONTHS:
        raise BadInputError(
            f"{spec.name}: {district} has {len(t)} usable training months, need {MIN_TRAIN_MONTHS}"
        )

    rescaled, slopes, means = y_aware_rescale(design.lagged[t], design.z[i, t])
    state = fit_pca(rescaled, spec.n_components, slopes, means)

    X = _regression_rows(design, state, i, t)
    y = panel.cases[i, t].astype(float)
    offset = design.log_population[i, t]
    years = design.years[t]
    cells = Cells(np.zeros(len(t), dtype=int), years, design.months[t])
    blocks = [AR1Block(int(years.min()), int(design.years[train_end]) - int(years.min()) + 1, 1, "ar1")]
    fit = fit_latent(y, X, offset, blocks, cells, label=f"{spec.name}/{district}@{panel.month_at(train_end)}")
    return DistrictPcr(state, LatentState(_coef_names(design, state.n_components), blocks, fit))


class PcaModel(ForecastingModel):
    """One supervised PCA regression per district"""

    family = "pca"

    def fit(self, spec: ModelSpec, panel: PanelDataset, train_end: int, jobs: int = 1) -> FittedModel:
        self.check_window(panel, train_end, MIN_TRAIN_MONTHS)
        design = build_pca_design(spec, panel, train_end)
        origin = str(panel.month_at(train_end))
        try:
            fits = Parallel(n_jobs=jobs)(
                delayed(fit_pcr)(d, panel, design, spec, train_end) for d in panel.districts
            )
        except ModelFitError as e:
            log_fit_event(logger, spec.name, origin, "failed", {"error": str(e)})
            raise

        state = PcaModelState(list(panel.districts), list(fits))
        diagnostics = FitDiagnostics(
            converged=all(f.regression.fit.converged for f in fits),
            objective=float(sum(f.regression.fit.objective for f in fits)),
            iterations=int(sum(f.regression.fit.iterations for f in fits)),
            gradient_norm=float(max(f.regression.fit.gradient_norm for f in fits)),
            extra={"components": [f.pca.n_components for f in fits],
                   "rank_deficient": [d for d, f in zip(panel.districts, fits) if f.pca.rank_deficient],
                   NEWEST_DATUM: max(self._training_reads(design, i, train_end)
                                     for i in range(panel.n_districts))},
        )
        log_fit_event(logger, spec.name, origin, "converged", diagnostics.to_dict())
        return FittedModel(spec, panel.month_at(train_end), state, diagnostics)

    @staticmethod
    def _training_reads(design: PcaDesign, i: int, train_end: int) -> int:
        t = training_rows(design, i, train_end)
        return max(int(t.max()), design.newest_datum(i, t)) if len(t) else -1

    def _target(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int):
        train_end = panel.index_of(fitted.train_end)
        design = build_pca_design(fitted.spec, panel, train_end, panel.n_months + horizon)
        t = origin + horizon
        if not design.lagged_valid[t]:
            raise MissingCovariateError(panel.districts[0], str(panel.month_at(t)), "lagged incidence")
        for i, d in enumerate(panel.districts):
            if not design.weather_row_valid(i, np.array([t]))[0]:
                name = design.weather_names[int(np.argmin(design.weather_valid[i, t]))]
                logger.error(f"Missing {name} for {d} at {panel.month_at(t)}")
                raise MissingCovariateError(d, str(panel.month_at(t)), name)
        return design, t

    def _cells(self, design: PcaDesign, t: int) -> Cells:
        return Cells(np.zeros(1, dtype=int), design.years[[t]], design.months[[t]])

    def forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                 n_samples: int, rng: np.random.Generator) -> Dict[str, ForecastDistribution]:
        self.check_origin(panel, origin, horizon, fitted.spec.max_horizon)
        design, t = self._target(fitted, panel, origin, horizon)
        state: PcaModelState = fitted.state
        counts = np.empty((n_samples, panel.n_districts), dtype=np.int64)
        for i, pcr in enumerate(state.fits):
            X = _regression_rows(design, pcr.pca, i, np.array([t]))
            offset = design.log_population[i, [t]]
            counts[:, i] = forecast_latent(pcr.regression, X, offset, self._cells(design, t), n_samples, rng)[:, 0]
        newest = max(design.newest_datum(i, np.array([t])) for i in range(panel.n_districts))
        return to_distributions(panel, origin, horizon, counts, newest)

    def point_forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> np.ndarray:
        design, t = self._target(fitted, panel, origin, horizon)
        out = np.empty(panel.n_districts)
        for i, pcr in enumerate(fitted.state.fits):
            X = _regression_rows(design, pcr.pca, i, np.array([t]))
            offset = design.log_population[i, [t]]
            out[i] = np.exp(mode_linear_predictor(pcr.regression, X, offset, self._cells(design, t))[0])
        return out
