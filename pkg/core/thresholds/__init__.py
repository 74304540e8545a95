"""Outbreak definitions"""
from .rules import (
    Label, OutbreakRule, OutbreakRuleResult, mean_2sd_threshold, percentile95_threshold,
    poisson_threshold, fixed_rate_threshold, outbreak_probability, label_panel,
)

__all__ = [
    'Label', 'OutbreakRule', 'OutbreakRuleResult', 'mean_2sd_threshold', 'percentile95_threshold',
    'poisson_threshold', 'fixed_rate_threshold', 'outbreak_probability', 'label_panel',
]
