"""
Model registry
Named presets, family lookup and the spatiotemporal design sweep
"""

from itertools import product
from typing import Dict, Iterable, List, Mapping, Optional, Type

from core.errors import SpecError
from core.models.base import EffectsSpec, ForecastingModel, ModelSpec
from core.models.hhh4 import Hhh4Model, Hhh4State
from core.models.inference import LatentState
from core.models.pca import PcaModel, PcaModelState
from core.models.reference import ReferenceModel
from core.models.spatiotemporal import SpatiotemporalModel

WEATHER = ("tmin", "rain")

PRESETS: Dict[str, ModelSpec] = {
    "reference": ModelSpec(
        name="reference", family="reference", offset_lag=None,
        effects=EffectsSpec(seasonal=True, temporal="none", spatial="iid"),
    ),
    "st1": ModelSpec(
        name="st1", family="spatiotemporal", offset_lag=3,
        effects=EffectsSpec(seasonal=True, temporal="ar1_shared", spatial="iid"),
    ),
    "st2": ModelSpec(
        name="st2", family="spatiotemporal", covariates=WEATHER, offset_lag=3,
        effects=EffectsSpec(seasonal=True, temporal="ar1_shared", spatial="bym2"),
    ),
    "st3": ModelSpec(
        name="st3", family="spatiotemporal", covariates=WEATHER, offset_lag=3,
        cumulative_windows=(12, 24, 36),
        effects=EffectsSpec(seasonal=True, temporal="ar1_shared", spatial="bym2"),
    ),
    "hhh4": ModelSpec(
        name="hhh4", family="hhh4", covariates=WEATHER, offset_lag=None,
        epidemic_covariates=True, neighbourhood_covariates=False,
    ),
    "pca": ModelSpec(
        name="pca", family="pca", covariates=WEATHER, offset_lag=None, pca_lags=(3, 4, 5),
    ),
}

MODELS: Dict[str, Type[ForecastingModel]] = {
    "reference": ReferenceModel,
    "spatiotemporal": SpatiotemporalModel,
    "hhh4": Hhh4Model,
    "pca": PcaModel,
}

STATES = {
    "reference": LatentState,
    "spatiotemporal": LatentState,
    "hhh4": Hhh4State,
    "pca": PcaModelState,
}


def model_for(family: str) -> ForecastingModel:
    try:
        return MODELS[family]()
    except KeyError:
        raise SpecError(f"Unknown model family: {family}")


def state_class(family: str):
    try:
        return STATES[family]
    except KeyError:
        raise SpecError(f"Unknown model family: {family}")


def preset(name: str, overrides: Optional[Mapping] = None) -> ModelSpec:
    """A named spec, optionally with field overrides; overrides are validated"""
    if name in PRESETS:
        base = PRESETS[name]
    else:
        sweep = {s.name: s for s in sweep_specs()}
        if name not in sweep:
            raise SpecError(f"Unknown model preset: {name}")
        base = sweep[name]
    if not overrides:
        return base
    data = base.model_dump()
    data.update(dict(overrides))
    return ModelSpec.model_validate(data)


def resolve_specs(names: Iterable[str], overrides: Optional[Mapping[str, Mapping]] = None) -> List[ModelSpec]:
    overrides = overrides or {}
    return [preset(n, overrides.get(n)) for n in names]


def sweep_specs(weather=WEATHER) -> List[ModelSpec]:
    """
    Spatiotemporal design space: weather subsets x cumulative-incidence windows x
    spatial structure, all with the lagged offset term and a shared AR(1).
    """
    weather_sets = [(), *[(w,) for w in weather], tuple(weather)]
    windows = [(), (12,), (24,), (36,), (12, 24, 36)]
    specs = []
    for covariates, cumulative, spatial in product(weather_sets, windows, ("iid", "besag", "bym2")):
        parts = ["st", "-".join(covariates) or "none", "-".join(map(str, cumulative)) or "nocum", spatial]
        specs.append(ModelSpec(
            name="_".join(parts), family="spatiotemporal", covariates=covariates, offset_lag=3,
            cumulative_windows=cumulative,
            effects=EffectsSpec(seasonal=True, temporal="ar1_shared", spatial=spatial),
        ))
    return specs
