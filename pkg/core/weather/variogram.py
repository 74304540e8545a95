"""
Semivariogram estimation
Empirical binned semivariance and weighted least-squares exponential fits
"""

from dataclasses import dataclass
from datetime import date
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import pdist

from core.errors import TooFewStationsError
from core.weather.stations import StationSeries
from utils.logger import setup_logger

logger = setup_logger("variogram")

MIN_STATIONS = 4
DEFAULT_NLAGS = 10


@dataclass(frozen=True)
class Variogram:
    """Exponential semivariogram with practical range"""
    nugget: float
    psill: float
    range: float
    family: str = "exponential"
    degenerate: bool = False

    @property
    def sill(self) -> float:
        return self.nugget + self.psill

    def __call__(self, h) -> np.ndarray:
        return exponential(np.array([self.psill, self.range, self.nugget]), np.asarray(h, dtype=float))

    def to_dict(self) -> dict:
        return {"family": self.family, "nugget": self.nugget, "psill": self.psill,
                "range": self.range, "degenerate": self.degenerate}


def exponential(params: np.ndarray, h: np.ndarray) -> np.ndarray:
    """nugget + psill * (1 - exp(-3h / range)); params are (psill, range, nugget)"""
    psill, rng, nugget = params
    return nugget + psill * (1.0 - np.exp(-3.0 * h / rng))


@dataclass(frozen=True)
class StationSnapshot:
    """Locations and values of the stations reporting one variable on one day"""
    coords: np.ndarray
    values: np.ndarray
    station_ids: Tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.values)


def snapshot(stations: Sequence[StationSeries], variable: str, day: date) -> StationSnapshot:
    """Collect the stations with a valid value for variable on day"""
    ids, coords, values = [], [], []
    for station in stations:
        value = station.value(variable, day)
        if value is not None and np.isfinite(value):
            ids.append(station.station_id)
            coords.append((station.x, station.y))
            values.append(value)
    return StationSnapshot(
        coords=np.asarray(coords, dtype=float).reshape(-1, 2),
        values=np.asarray(values, dtype=float),
        station_ids=tuple(ids),
    )


def empirical_semivariogram(coords: np.ndarray, values: np.ndarray,
                            nlags: int = DEFAULT_NLAGS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Binned semivariance over nlags equal-width distance bins.

    Returns (mean lag distance, mean semivariance, pair count) for non-empty bins.
    """
    d = pdist(coords, metric="euclidean")
    g = 0.5 * pdist(values[:, None], metric="sqeuclidean")

    dmin, dmax = np.amin(d), np.amax(d)
    edges = dmin + (dmax - dmin) / nlags * np.arange(nlags + 1)
    edges[-1] = dmax + 0.001

    lags, semivariance, counts = [], [], []
    for n in range(nlags):
        in_bin = (d >= edges[n]) & (d < edges[n + 1])
        if in_bin.any():
            lags.append(d[in_bin].mean())
            semivariance.append(g[in_bin].mean())
            counts.append(in_bin.sum())
    return np.array(lags), np.array(semivariance), np.array(counts, dtype=float)


def fit_variogram_values(coords: np.ndarray, values: np.ndarray,
                         nlags: int = DEFAULT_NLAGS) -> Variogram:
    """Fit an exponential variogram to point values by pair-count weighted least squares"""
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) < MIN_STATIONS:
        raise TooFewStationsError(
            f"Variogram fit needs at least {MIN_STATIONS} stations, got {len(values)}"
        )

    variance = float(np.var(values))
    lags, semivariance, counts = empirical_semivariogram(coords, values, nlags)
    max_lag = float(np.amax(lags))
    max_gamma = float(np.amax(semivariance))

    if max_gamma <= 1e-12 * max(1.0, variance):
        logger.info("Stations report a spatially constant field; variogram degenerate")
        return Variogram(nugget=0.0, psill=0.0, range=max(max_lag, 1.0), degenerate=True)

    weights = np.sqrt(counts / counts.sum())

    def residuals(params):
        return (exponential(params, lags) - semivariance) * weights

    x0 = [max_gamma - np.amin(semivariance), 0.5 * max_lag, np.amin(semivariance)]
    lower = [0.0, 1e-6 * max_lag, 0.0]
    upper = [10.0 * max_gamma, 3.0 * max_lag, max_gamma]
    x0 = np.clip(x0, lower, np.nextafter(np.asarray(upper), 0))

    res = least_squares(residuals, x0, bounds=(lower, upper))
    psill, rng, nugget = (float(v) for v in res.x)
    degenerate = psill < 1e-12 * max(1.0, variance)
    if degenerate:
        logger.warning(f"Degenerate variogram fit: psill={psill:.3g}, nugget={nugget:.3g}")
    return Variogram(nugget=nugget, psill=psill, range=rng, degenerate=degenerate)


def fit_variogram(stations: Sequence[StationSeries], variable: str, day: date,
                  nlags: int = DEFAULT_NLAGS) -> Variogram:
    """Fit the day's variogram for one variable across all reporting stations"""
    snap = snapshot(stations, variable, day)
    if snap.n < MIN_STATIONS:
        raise TooFewStationsError(
            f"Only {snap.n} stations report {variable} on {day}; need {MIN_STATIONS}"
        )
    return fit_variogram_values(snap.coords, snap.values, nlags)
