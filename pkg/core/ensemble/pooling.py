"""
Sample pooling
Draws the ensemble predictive distribution from component samples in proportion to the weights
"""

from typing import Dict, List, Mapping

import numpy as np

from core.errors import BadInputError
from core.models.base import ForecastDistribution
from utils.logger import setup_logger

logger = setup_logger("pooling")

N_POOLED = 10000
QUANTILES = (2.5, 50.0, 97.5)


def allocate(weights: Mapping[str, float], n_total: int = N_POOLED) -> Dict[str, int]:
    """
    Largest-remainder rounding of w_m * n_total. Leftover units go to the largest
    fractional parts, ties to the earlier model.
    """
    if n_total < 1:
        raise BadInputError("Pooled sample count must be positive")
    names = list(weights)
    exact = np.array([weights[m] for m in names], dtype=float) * n_total
    counts = np.floor(exact + 1e-9).astype(int)
    left = n_total - int(counts.sum())
    if left > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:left]] += 1
    elif left < 0:
        order = np.argsort(exact - counts, kind="stable")
        for k in order:
            if left == 0:
                break
            if counts[k] > 0:
                counts[k] -= 1
                left += 1
    return dict(zip(names, counts.tolist()))


def pool_samples(forecasts: Mapping[str, ForecastDistribution], weights: Mapping[str, float],
                 n_total: int = N_POOLED, rng: np.random.Generator = None) -> ForecastDistribution:
    """
    Ensemble forecast for one (district, origin, horizon): n_m draws with replacement
    from model m's samples, n_m allocated by largest remainder.
    """
    missing = [m for m, w in weights.items() if w > 0 and m not in forecasts]
    if missing:
        raise BadInputError(f"Missing component forecasts: {', '.join(missing)}")
    units = {(f.district, f.origin, f.horizon) for m, f in forecasts.items() if m in weights}
    if len(units) != 1:
        raise BadInputError(f"Component forecasts disagree on district, origin or horizon: {sorted(map(str, units))}")
    rng = rng if rng is not None else np.random.default_rng()
    counts = allocate(weights, n_total)
    parts: List[np.ndarray] = []
    for model, k in counts.items():
        if k == 0:
            continue
        samples = forecasts[model].samples
        parts.append(samples[rng.integers(0, samples.size, size=k)])
    district, origin, horizon = units.pop()
    return ForecastDistribution(district, origin, horizon, np.concatenate(parts))
