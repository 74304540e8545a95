"""Panel data model and feature engineering"""
from .dataset import AdjacencyGraph, PanelDataset, Violation, validate, require_valid
from .features import FeatureMatrix, lag_cases, lagged_offset_term, cumulative_incidence, standardize

__all__ = [
    'AdjacencyGraph', 'PanelDataset', 'Violation', 'validate', 'require_valid',
    'FeatureMatrix', 'lag_cases', 'lagged_offset_term', 'cumulative_incidence', 'standardize',
]
