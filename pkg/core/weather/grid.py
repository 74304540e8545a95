"""
Regular reanalysis grids and nearest-cell assignment
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from core.errors import BadInputError


@dataclass(frozen=True)
class GridField:
    """
    Daily values of one variable on a regular grid.
    Cell (row, col) is centred at (x0 + col * cell_size, y0 + row * cell_size).
    values has shape (days, rows, cols).
    """
    variable: str
    dates: pd.DatetimeIndex
    x0: float
    y0: float
    cell_size: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != len(self.dates):
            raise BadInputError(f"Grid {self.variable} values must be (days, rows, cols)")
        if self.values.shape[1] == 0 or self.values.shape[2] == 0:
            raise BadInputError(f"Grid {self.variable} is empty")
        if self.cell_size <= 0:
            raise BadInputError(f"Grid {self.variable} cell size must be positive")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    def centres(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = self.shape
        xs = self.x0 + self.cell_size * np.arange(cols)
        ys = self.y0 + self.cell_size * np.arange(rows)
        return np.meshgrid(xs, ys)


def nearest_cell_index(grid: GridField, centroid: Tuple[float, float]) -> Tuple[int, int]:
    """Cell whose centre is closest to centroid; ties go to the lowest (row, col)"""
    cx, cy = grid.centres()
    d2 = (cx - centroid[0]) ** 2 + (cy - centroid[1]) ** 2
    flat = d2.ravel()
    best = flat.min()
    # row-major order makes the first hit the lowest (row, col)
    k = int(np.flatnonzero(flat <= best * (1 + 1e-12) + 1e-12)[0])
    return divmod(k, grid.shape[1])


def nearest_cell(grid: GridField, centroid: Tuple[float, float]) -> pd.Series:
    """Daily series of the nearest cell to centroid"""
    row, col = nearest_cell_index(grid, centroid)
    return pd.Series(grid.values[:, row, col], index=grid.dates, name=grid.variable)
