"""Weather ingestion: variograms, kriging, grid assignment, monthly aggregation"""
from .variogram import Variogram, fit_variogram
from .kriging import krige_point
from .grid import GridField, nearest_cell
from .aggregate import aggregate_monthly

__all__ = ['Variogram', 'fit_variogram', 'krige_point', 'GridField', 'nearest_cell', 'aggregate_monthly']
