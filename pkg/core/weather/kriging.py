"""
Ordinary kriging at point targets
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from core.errors import SingularSystemError, TooFewStationsError
from core.weather.variogram import StationSnapshot, Variogram
from utils.logger import setup_logger

logger = setup_logger("kriging")

JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6)
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class KrigingResult:
    estimate: float
    variance: float
    weights: np.ndarray
    negative_weights: bool


def _solve(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Solve the bordered system, retrying with a growing diagonal jitter"""
    scale = max(float(np.abs(a[:n, :n]).max()), 1.0)
    for jitter in JITTER_STEPS:
        trial = a.copy()
        trial[np.arange(n), np.arange(n)] -= jitter * scale
        try:
            if np.linalg.cond(trial) > MAX_CONDITION:
                continue
            return np.linalg.solve(trial, b)
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError("Kriging system singular after regularized retries")


def krige_point(stations: StationSnapshot, variogram: Variogram,
                target: Tuple[float, float]) -> KrigingResult:
    """
    Ordinary kriging estimate and variance at one target location.
    Weights sum to 1; negative weights are reported, never clipped.
    """
    n = stations.n
    if n < 2:
        raise TooFewStationsError(f"Kriging needs at least 2 stations, got {n}")

    X = stations.coords
    d = squareform(pdist(X, metric="euclidean"))
    bd = cdist(X, np.asarray(target, dtype=float).reshape(1, 2), metric="euclidean")[:, 0]

    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = -variogram(d)
    np.fill_diagonal(a, 0.0)
    a[n, :n] = 1.0
    a[:n, n] = 1.0

    b = np.zeros(n + 1)
    b[:n] = -variogram(bd)
    on_station = np.abs(bd) <= 1e-10
    b[:n][on_station] = 0.0
    b[n] = 1.0

    res = _solve(a, b, n)
    weights = res[:n]
    total = weights.sum()
    if not np.isclose(total, 1.0, atol=1e-8):
        raise SingularSystemError(f"Kriging weights sum to {total}, not 1")

    estimate = float(weights @ stations.values)
    variance = float(res @ -b)
    if variance < 0:
        # round-off only; the system is positive by construction
        variance = 0.0
    negative = bool((weights < -1e-12).any())
    if negative:
        logger.debug(f"Negative kriging weights at target {target}: min {weights.min():.3g}")
    return KrigingResult(estimate=estimate, variance=variance, weights=weights, negative_weights=negative)
