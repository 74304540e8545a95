"""
Weather ingestion pipeline
Turns station or grid daily data into monthly district covariates
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.errors import BadInputError, SingularSystemError, TooFewStationsError
from core.weather.aggregate import MISSING_FRACTION, aggregate_monthly, kind_of
from core.weather.grid import GridField, nearest_cell
from core.weather.kriging import krige_point
from core.weather.stations import StationSeries, days_covered
from core.weather.variogram import DEFAULT_NLAGS, MIN_STATIONS, fit_variogram_values, snapshot
from utils.logger import setup_logger

logger = setup_logger("weather")


@dataclass
class IngestResult:
    """Monthly covariate frames per variable plus per-day diagnostics"""
    covariates: Dict[str, pd.DataFrame]
    flagged_months: pd.DataFrame
    skipped_days: Dict[str, List[str]] = field(default_factory=dict)
    degenerate_days: Dict[str, int] = field(default_factory=dict)
    negative_weight_solves: Dict[str, int] = field(default_factory=dict)


def _krige_day(stations: Sequence[StationSeries], variable: str, day: pd.Timestamp,
               targets: np.ndarray, nlags: int) -> Tuple[Optional[np.ndarray], bool, int]:
    """District values for one day; None when too few stations report"""
    snap = snapshot(stations, variable, day)
    try:
        variogram = fit_variogram_values(snap.coords, snap.values, nlags)
    except TooFewStationsError:
        return None, False, 0
    out = np.empty(len(targets))
    negatives = 0
    for k, target in enumerate(targets):
        try:
            result = krige_point(snap, variogram, tuple(target))
        except SingularSystemError:
            return None, variogram.degenerate, negatives
        out[k] = result.estimate
        negatives += int(result.negative_weights)
    return out, variogram.degenerate, negatives


def _monthly_frames(daily: pd.DataFrame, variable: str,
                    missing_fraction: float) -> Tuple[pd.DataFrame, pd.DataFrame]:
    kind = kind_of(variable)
    rows, flags = [], []
    for district in daily.columns:
        monthly = aggregate_monthly(daily[district], kind, missing_fraction)
        for period, rec in monthly.iterrows():
            rows.append((district, period.year, period.month, rec["value"]))
            if rec["flagged"]:
                flags.append((district, period.year, period.month, variable, int(rec["n_missing"])))
    frame = pd.DataFrame(rows, columns=["district", "year", "month", variable])
    flagged = pd.DataFrame(flags, columns=["district", "year", "month", "variable", "n_missing"])
    return frame, flagged


def _reindex_days(daily: pd.DataFrame) -> pd.DataFrame:
    """Fill calendar gaps so month lengths count absent days as missing"""
    full = pd.date_range(daily.index.min().to_period("M").start_time,
                         daily.index.max().to_period("M").end_time.normalize(), freq="D")
    return daily.reindex(full)


def ingest_stations(stations: Sequence[StationSeries], centroids: Mapping[str, Tuple[float, float]],
                    variables: Sequence[str], nlags: int = DEFAULT_NLAGS,
                    missing_fraction: float = MISSING_FRACTION, jobs: int = -1) -> IngestResult:
    """Krige every day at each district centroid, then aggregate to months"""
    if not stations:
        raise BadInputError("No stations to interpolate")
    if not centroids:
        raise BadInputError("No district centroids")

    districts = list(centroids)
    targets = np.array([centroids[d] for d in districts], dtype=float)
    days = days_covered(list(stations))

    covariates, flagged = {}, []
    result = IngestResult(covariates={}, flagged_months=pd.DataFrame())
    for variable in variables:
        kind_of(variable)
        logger.info(f"Kriging {variable} over {len(days)} days for {len(districts)} districts")
        solved = Parallel(n_jobs=jobs)(
            delayed(_krige_day)(stations, variable, day, targets, nlags) for day in days
        )
        daily = pd.DataFrame(np.nan, index=days, columns=districts)
        skipped = []
        for day, (values, degenerate, negatives) in zip(days, solved):
            if values is None:
                skipped.append(day.strftime("%Y-%m-%d"))
                continue
            daily.loc[day] = values
            result.degenerate_days[variable] = result.degenerate_days.get(variable, 0) + int(degenerate)
            result.negative_weight_solves[variable] = result.negative_weight_solves.get(variable, 0) + negatives
        if skipped:
            logger.warning(f"{variable}: {len(skipped)} days with fewer than {MIN_STATIONS} stations left missing")
        result.skipped_days[variable] = skipped

        frame, flags = _monthly_frames(_reindex_days(daily), variable, missing_fraction)
        covariates[variable] = frame
        flagged.append(flags)

    result.covariates = covariates
    result.flagged_months = pd.concat(flagged, ignore_index=True) if flagged else pd.DataFrame()
    return result


def ingest_grid(grids: Mapping[str, GridField], centroids: Mapping[str, Tuple[float, float]],
                missing_fraction: float = MISSING_FRACTION) -> IngestResult:
    """Assign each district its nearest grid cell, then aggregate to months"""
    if not centroids:
        raise BadInputError("No district centroids")

    covariates, flagged = {}, []
    for variable, grid in grids.items():
        kind_of(variable)
        daily = pd.DataFrame({d: nearest_cell(grid, xy) for d, xy in centroids.items()})
        frame, flags = _monthly_frames(_reindex_days(daily), variable, missing_fraction)
        covariates[variable] = frame
        flagged.append(flags)
        logger.info(f"Assigned nearest {variable} cells for {len(centroids)} districts")

    return IngestResult(
        covariates=covariates,
        flagged_months=pd.concat(flagged, ignore_index=True) if flagged else pd.DataFrame(),
    )
