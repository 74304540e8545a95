"""Forecasting model families"""
from .base import (
    EffectsSpec, ModelSpec, FittedModel, ForecastDistribution, ForecastingModel, crpss, forecast_rng,
)
from .reference import ReferenceModel
from .spatiotemporal import SpatiotemporalModel, StSpec, BesagStructure, build_design, log_mean
from .hhh4 import Hhh4Model, Hhh4Params, powerlaw_weights, mean_decomposition, fit_hhh4, forecast_hhh4
from .pca import PcaModel, YAwarePcaState, y_aware_rescale, fit_pca, fit_pcr
from .registry import PRESETS, model_for, preset, resolve_specs, sweep_specs

__all__ = [
    'EffectsSpec', 'ModelSpec', 'FittedModel', 'ForecastDistribution', 'ForecastingModel', 'crpss',
    'forecast_rng', 'ReferenceModel', 'SpatiotemporalModel', 'StSpec', 'BesagStructure', 'build_design',
    'log_mean', 'Hhh4Model', 'Hhh4Params', 'powerlaw_weights', 'mean_decomposition', 'fit_hhh4',
    'forecast_hhh4', 'PcaModel', 'YAwarePcaState', 'y_aware_rescale', 'fit_pca', 'fit_pcr',
    'PRESETS', 'model_for', 'preset', 'resolve_specs', 'sweep_specs',
]
