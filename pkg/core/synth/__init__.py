"""Synthetic panels, weather fixtures and model simulators"""
from .generator import (
    SyntheticData, bernoulli_outcomes, grid_layout, mixture_benchmark, simulate_hhh4, simulate_latent,
    synthetic_panel, write_fixture,
)

__all__ = [
    'SyntheticData', 'bernoulli_outcomes', 'grid_layout', 'mixture_benchmark', 'simulate_hhh4',
    'simulate_latent', 'synthetic_panel', 'write_fixture',
]
