"""
Daily to monthly aggregation of weather series
"""

from typing import Optional

import numpy as np
import pandas as pd

from core.errors import BadInputError

MISSING_FRACTION = 0.2

VARIABLE_KINDS = {
    "tmin": "temperature",
    "tmax": "temperature",
    "tavg": "temperature",
    "rh": "humidity",
    "rain": "rainfall",
}


def kind_of(variable: str) -> str:
    try:
        return VARIABLE_KINDS[variable]
    except KeyError:
        raise BadInputError(f"Unknown weather variable: {variable}")


def aggregate_monthly(daily: pd.Series, kind: str,
                      missing_fraction: float = MISSING_FRACTION,
                      days_in_month: Optional[int] = None) -> pd.DataFrame:
    """
    Monthly mean (temperature, humidity) or sum (rainfall) of a daily series.

    Missing days are NaN values or dates absent from the index. Months whose
    missing share exceeds missing_fraction are flagged; all-missing months
    give NaN. days_in_month overrides the calendar length (toy months).

    Returns a frame indexed by monthly Period with value, n_valid, n_missing, flagged.
    """
    if kind not in ("temperature", "humidity", "rainfall"):
        raise BadInputError(f"Unknown variable kind: {kind}")
    if not isinstance(daily.index, pd.DatetimeIndex):
        raise BadInputError("Daily series needs a DatetimeIndex")

    periods = daily.index.to_period("M")
    grouped = daily.groupby(periods)
    n_valid = grouped.count()
    value = grouped.sum(min_count=1) if kind == "rainfall" else grouped.mean()

    if days_in_month is not None:
        length = pd.Series(days_in_month, index=n_valid.index)
    else:
        length = pd.Series(n_valid.index.days_in_month, index=n_valid.index)
    n_missing = (length - n_valid).clip(lower=0)

    out = pd.DataFrame({
        "value": value.where(n_valid > 0, np.nan),
        "n_valid": n_valid.astype(int),
        "n_missing": n_missing.astype(int),
    })
    out["flagged"] = (out["n_missing"] / length) > missing_fraction
    return out
