"""Proper scoring rules and score tables"""
from .metrics import (
    ClassificationMetrics, bias, brier, calibration_bins, classification_metrics, crps, diffuseness,
    labels_from_probability, mean_abs_difference,
)
from .table import AGGREGATIONS, ScoreTable, score_forecast

__all__ = [
    'ClassificationMetrics', 'bias', 'brier', 'calibration_bins', 'classification_metrics', 'crps',
    'diffuseness', 'labels_from_probability', 'mean_abs_difference', 'AGGREGATIONS', 'ScoreTable',
    'score_forecast',
]
