"""Shared fixtures: hand-built toy panels and small synthetic panels"""

import numpy as np
import pandas as pd
import pytest

from core.panel.dataset import AdjacencyGraph, PanelDataset
from core.synth.generator import synthetic_panel


def make_panel(cases, population=100000.0, edges=None, start="2010-01", covariates=None, districts=None):
    """Toy panel from a (districts, months) case array; a path graph unless edges are given"""
    cases = np.atleast_2d(np.asarray(cases))
    n, T = cases.shape
    names = districts or [f"D{k + 1:02d}" for k in range(n)]
    if edges is None:
        edges = [(names[k], names[k + 1]) for k in range(n - 1)]
    population = np.broadcast_to(np.asarray(population, dtype=float), (n, T)).copy()
    months = pd.period_range(start, periods=T, freq="M")
    return PanelDataset(names, months, cases, population, AdjacencyGraph(names, edges), covariates or {})


@pytest.fixture(scope="session")
def synthetic():
    """Five districts over four years with weather fixtures"""
    return synthetic_panel(n_districts=5, n_months=48, seed=11)


@pytest.fixture(scope="session")
def panel(synthetic):
    return synthetic.panel


@pytest.fixture(scope="session")
def long_panel():
    """Seven years, long enough for the 36-month cumulative incidence windows"""
    return synthetic_panel(n_districts=6, n_months=84, seed=5, n_stations=4, grid_size=3).panel
