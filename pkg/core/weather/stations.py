"""
Weather station records
"""

from dataclasses import dataclass, field
from datetime import date
from typing import List, Optional

import numpy as np
import pandas as pd

STATION_VARIABLES = ("tmin", "tmax", "tavg", "rh", "rain")


@dataclass
class StationSeries:
    """
    Daily observations at one station.
    Location is planar (metres); daily is indexed by date with one column per variable.
    """
    station_id: str
    x: float
    y: float
    daily: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=list(STATION_VARIABLES)))

    def value(self, variable: str, day: date) -> Optional[float]:
        if variable not in self.daily.columns:
            return None
        ts = pd.Timestamp(day)
        if ts not in self.daily.index:
            return None
        v = self.daily.at[ts, variable]
        return None if pd.isna(v) else float(v)

    def violations(self) -> pd.Series:
        """Boolean per day: record breaks tmin <= tavg <= tmax, 0 <= rh <= 100 or rain >= 0"""
        d = self.daily
        bad = pd.Series(False, index=d.index)
        if {"tmin", "tavg", "tmax"} <= set(d.columns):
            bad |= (d["tmin"] > d["tavg"]) | (d["tavg"] > d["tmax"])
        if "rh" in d.columns:
            bad |= (d["rh"] < 0) | (d["rh"] > 100)
        if "rain" in d.columns:
            bad |= d["rain"] < 0
        return bad

    def masked(self) -> "StationSeries":
        """Copy with records that break an invariant set to missing"""
        daily = self.daily.copy()
        daily.loc[self.violations().to_numpy()] = np.nan
        return StationSeries(self.station_id, self.x, self.y, daily)


def days_covered(stations: List[StationSeries]) -> pd.DatetimeIndex:
    """Every day reported by at least one station, sorted"""
    if not stations:
        return pd.DatetimeIndex([])
    index = stations[0].daily.index
    for s in stations[1:]:
        index = index.union(s.daily.index)
    return pd.DatetimeIndex(index).sort_values()
