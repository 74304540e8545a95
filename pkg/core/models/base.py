"""
Forecasting model contract
Model specs, fitted models, forecast distributions and the skill score
"""

import json
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import BadInputError, DengueCastError, SpecError
from core.panel.dataset import PanelDataset
from utils.logger import setup_logger

logger = setup_logger("models")

FORMAT_VERSION = 1
MIN_SCORING_SAMPLES = 1000
HORIZONS = (1, 2, 3)
NEWEST_DATUM = "newest_datum"

Family = Literal["reference", "spatiotemporal", "hhh4", "pca"]


class EffectsSpec(BaseModel):
    """Random-effect structure of a latent Gaussian model"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seasonal: bool = True
    temporal: Literal["none", "ar1_shared", "ar1_district"] = "ar1_shared"
    spatial: Literal["none", "iid", "besag", "bym2"] = "iid"


class ModelSpec(BaseModel):
    """Declarative model configuration, shared by all families"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    family: Family
    covariates: Tuple[str, ...] = ()
    case_lag: int = 3
    covariate_lag: int = 3
    offset_lag: Optional[int] = 3
    cumulative_windows: Tuple[int, ...] = ()
    standardize: bool = True
    effects: EffectsSpec = Field(default_factory=EffectsSpec)
    horizons: Tuple[int, ...] = HORIZONS
    # hhh4
    epidemic_covariates: bool = True
    neighbourhood_covariates: bool = False
    district_intercepts: bool = True
    # pca
    n_components: int = 10
    pca_lags: Tuple[int, ...] = (3, 4, 5)

    @model_validator(mode="after")
    def _check_lags(self):
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise SpecError(f"{self.name}: horizons must be positive")
        if self.family in ("spatiotemporal", "pca"):
            max_h = max(self.horizons)
            lags = [self.case_lag, self.covariate_lag]
            if self.offset_lag is not None:
                lags.append(self.offset_lag)
            if self.family == "pca":
                lags.extend(self.pca_lags)
            if min(lags) < max_h:
                raise SpecError(
                    f"{self.name}: case and weather lags must be at least the maximum horizon {max_h}"
                )
        if any(w not in (12, 24, 36) for w in self.cumulative_windows):
            raise SpecError(f"{self.name}: cumulative windows must be 12, 24 or 36")
        if self.n_components < 1:
            raise SpecError(f"{self.name}: need at least one principal component")
        return self

    def check_panel(self, panel: PanelDataset):
        missing = [c for c in self.covariates if c not in panel.covariates]
        if missing:
            raise SpecError(f"{self.name}: covariates not in panel: {', '.join(missing)}")

    @property
    def max_horizon(self) -> int:
        return max(self.horizons)

    @property
    def model_id(self) -> int:
        return zlib.crc32(self.name.encode("utf-8"))


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    objective: float
    iterations: int
    gradient_norm: float
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"converged": self.converged, "objective": self.objective,
                "iterations": self.iterations, "gradient_norm": self.gradient_norm, **self.extra}

    @classmethod
    def from_dict(cls, data: dict) -> "FitDiagnostics":
        data = dict(data)
        base = {k: data.pop(k) for k in ("converged", "objective", "iterations", "gradient_norm")}
        return cls(**base, extra=data)


@dataclass(frozen=True)
class FittedModel:
    """
    A fitted model: its spec, the last training month, family state
    (mode and Gaussian approximation) and fit diagnostics.
    """
    spec: ModelSpec
    train_end: pd.Period
    state: Any
    diagnostics: FitDiagnostics

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def name(self) -> str:
        return self.spec.name

    def to_json(self) -> str:
        return json.dumps({
            "format_version": FORMAT_VERSION,
            "spec": self.spec.model_dump(mode="json"),
            "train_end": str(self.train_end),
            "state": self.state.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
        }, indent=2, default=float)

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        from core.models.registry import state_class

        data = json.loads(text)
        if data.get("format_version") != FORMAT_VERSION:
            raise BadInputError(f"Unsupported fitted model format {data.get('format_version')}")
        spec = ModelSpec.model_validate(data["spec"])
        return cls(
            spec=spec,
            train_end=pd.Period(data["train_end"], freq="M"),
            state=state_class(spec.family).from_dict(data["state"]),
            diagnostics=FitDiagnostics.from_dict(data["diagnostics"]),
        )


@dataclass(frozen=True)
class ForecastDistribution:
    """
    Predictive samples of the case count for one district, origin and horizon.
    newest_datum is the newest panel month index the forecast step read, -1 for none.
    """
    district: str
    origin: pd.Period
    horizon: int
    samples: np.ndarray
    newest_datum: int = -1

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size < 1:
            raise BadInputError("A forecast needs a non-empty vector of samples")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise BadInputError(f"Forecast samples for {self.district} must be finite and non-negative")
        object.__setattr__(self, "samples", samples.astype(np.int64))
        self.samples.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def target(self) -> pd.Period:
        return self.origin + self.horizon

    def check_scorable(self):
        if self.n_samples < MIN_SCORING_SAMPLES:
            raise BadInputError(
                f"Forecast for {self.district} has {self.n_samples} samples; scoring needs {MIN_SCORING_SAMPLES}"
            )

    def quantiles(self, q=(2.5, 50.0, 97.5)) -> np.ndarray:
        return np.percentile(self.samples, q, method="linear")

    def mean(self) -> float:
        return float(self.samples.mean())


def forecast_rng(seed: int, spec: ModelSpec, origin: int, horizon: int) -> np.random.Generator:
    """Independent stream per (seed, model, origin, horizon)"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), spec.model_id, int(origin), int(horizon)]))


class ForecastingModel(ABC):
    """A model family: fits on a training window and samples forecasts"""

    family: str = ""

    @abstractmethod
    def fit(self, spec: ModelSpec, panel: PanelDataset, train_end: int, jobs: int = 1) -> FittedModel:
        """Fit on months 0..train_end (inclusive)"""

    @abstractmethod
    def forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                 n_samples: int, rng: np.random.Generator) -> Dict[str, ForecastDistribution]:
        """Samples for every district at month origin + horizon"""

    @abstractmethod
    def point_forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int,
                       horizon: int) -> np.ndarray:
        """Mean count per district at the mode, no sampling"""

    @staticmethod
    def check_window(panel: PanelDataset, train_end: int, minimum: int = 1):
        if train_end < 0 or train_end + 1 < minimum:
            raise BadInputError(f"Training window of {train_end + 1} months is too short (need {minimum})")
        if train_end >= panel.n_months:
            raise BadInputError(f"Training end {train_end} lies past the panel end")

    @staticmethod
    def check_origin(panel: PanelDataset, origin: int, horizon: int, max_horizon: int):
        if horizon < 1 or horizon > max_horizon:
            raise BadInputError(f"Horizon {horizon} outside 1..{max_horizon}")
        if origin < 0 or origin >= panel.n_months:
            raise BadInputError(f"Origin {origin} outside the panel")


def to_distributions(panel: PanelDataset, origin: int, horizon: int, counts: np.ndarray,
                     newest_datum: int = -1) -> Dict[str, ForecastDistribution]:
    """(S, n districts) draws to a forecast per district"""
    period = panel.month_at(origin)
    return {
        d: ForecastDistribution(d, period, horizon, counts[:, i], int(newest_datum))
        for i, d in enumerate(panel.districts)
    }


def crpss(model_crps: float, reference_crps: float) -> float:
    """1 - CRPS_model / CRPS_reference; NaN when the reference CRPS is not positive"""
    if not reference_crps > 0:
        logger.warning(f"CRPSS undefined: reference CRPS is {reference_crps}")
        return float("nan")
    return 1.0 - float(model_crps) / float(reference_crps)


def newest_read(fitted: FittedModel, forecasts: Dict[str, ForecastDistribution]) -> int:
    """Newest panel month index a fit and its forecasts read, as the models recorded it"""
    if NEWEST_DATUM not in fitted.diagnostics.extra:
        raise DengueCastError(f"{fitted.name} does not record the data its fit read")
    reads = [int(fitted.diagnostics.extra[NEWEST_DATUM])]
    reads += [f.newest_datum for f in forecasts.values()]
    return max(reads)
