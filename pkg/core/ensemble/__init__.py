"""Ensemble construction and the rolling-origin evaluation harness"""
from .weights import EnsembleWeights, compute_weights, inverse_crps_weights, weights_from_scores
from .pooling import N_POOLED, QUANTILES, allocate, pool_samples
from .artifacts import ForecastCube, RunDirectory
from .tscv import (
    ENSEMBLE, LeakageAudit, TscvPlan, TscvResult, add_ensemble, pool_cubes, rule_results, run_evaluation,
    run_tscv, score_cube, split_plans,
)

__all__ = [
    'EnsembleWeights', 'compute_weights', 'inverse_crps_weights', 'weights_from_scores', 'N_POOLED',
    'QUANTILES', 'allocate', 'pool_samples', 'ForecastCube', 'RunDirectory', 'ENSEMBLE', 'LeakageAudit',
    'TscvPlan', 'TscvResult', 'add_ensemble', 'pool_cubes', 'rule_results', 'run_evaluation', 'run_tscv',
    'score_cube', 'split_plans',
]
