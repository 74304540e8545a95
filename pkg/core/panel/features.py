"""
Feature engineering on the panel
Lagged counts and covariates, offset terms, cumulative incidence and standardization
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import InvalidLagError, BadInputError
from core.panel.dataset import INCIDENCE_SCALE, PanelDataset

CUMULATIVE_WINDOWS = (12, 24, 36)


@dataclass(frozen=True)
class FeatureMatrix:
    """
    Named features aligned to a panel month axis.

    values and valid have shape (n districts, n months on the axis, k features).
    lags[k] is the age in months of the newest raw datum feature k consumes at
    each cell; None marks calendar terms that consume no data.
    """
    names: Tuple[str, ...]
    values: np.ndarray
    valid: np.ndarray
    start: pd.Period
    lags: Tuple[Optional[int], ...]
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise BadInputError("FeatureMatrix values and mask differ in shape")
        if self.values.ndim != 3 or self.values.shape[2] != len(self.names):
            raise BadInputError("FeatureMatrix values must be (districts, months, features)")
        if len(self.lags) != len(self.names):
            raise BadInputError("FeatureMatrix needs one lag entry per feature")
        self.values.setflags(write=False)
        self.valid.setflags(write=False)

    @property
    def n_districts(self) -> int:
        return self.values.shape[0]

    @property
    def n_total(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return len(self.names)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    def column_valid(self, name: str) -> np.ndarray:
        return self.valid[:, :, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(
            names=tuple(names),
            values=self.values[:, :, idx],
            valid=self.valid[:, :, idx],
            start=self.start,
            lags=tuple(self.lags[i] for i in idx),
            degenerate=None if self.degenerate is None else self.degenerate[:, idx],
        )

    def rows_valid(self) -> np.ndarray:
        """(n, N) mask: every feature defined at the cell"""
        if self.n_features == 0:
            return np.ones(self.values.shape[:2], dtype=bool)
        return self.valid.all(axis=2)

    def min_lag(self) -> Optional[int]:
        data_lags = [l for l in self.lags if l is not None]
        return min(data_lags) if data_lags else None

    def newest_datum(self, district: np.ndarray, t: np.ndarray) -> int:
        return newest_datum(self.valid, self.lags, district, t)


def newest_datum(valid: np.ndarray, lags: Sequence[Optional[int]], district: np.ndarray,
                 t: np.ndarray) -> int:
    """
    Newest panel month index whose raw data the cells (district[r], t[r]) consume.

    Only defined cells count, and calendar terms (lag None) consume nothing.
    Returns -1 when no cell consumes data.
    """
    district = np.asarray(district, dtype=int)
    t = np.asarray(t, dtype=int)
    newest = -1
    for k, lag in enumerate(lags):
        if lag is None:
            continue
        used = valid[district, t, k]
        if used.any():
            newest = max(newest, int(t[used].max()) - lag)
    return newest


def combine(features: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Stack feature matrices along the feature axis"""
    if not features:
        raise BadInputError("Nothing to combine")
    first = features[0]
    for fm in features[1:]:
        if fm.values.shape[:2] != first.values.shape[:2] or fm.start != first.start:
            raise BadInputError("Feature matrices are not aligned")
    names = tuple(n for fm in features for n in fm.names)
    if len(set(names)) != len(names):
        raise BadInputError(f"Duplicate feature names: {names}")
    return FeatureMatrix(
        names=names,
        values=np.concatenate([fm.values for fm in features], axis=2),
        valid=np.concatenate([fm.valid for fm in features], axis=2),
        start=first.start,
        lags=tuple(l for fm in features for l in fm.lags),
    )


def empty_features(panel: PanelDataset, n_total: Optional[int] = None) -> FeatureMatrix:
    n_total = panel.n_months if n_total is None else n_total
    return FeatureMatrix(
        names=(),
        values=np.zeros((panel.n_districts, n_total, 0)),
        valid=np.zeros((panel.n_districts, n_total, 0), dtype=bool),
        start=panel.months[0],
        lags=(),
    )


def _single(panel: PanelDataset, name: str, values: np.ndarray, valid: np.ndarray,
            lag: Optional[int]) -> FeatureMatrix:
    values = np.where(valid, values, np.nan)
    return FeatureMatrix(
        names=(name,),
        values=values[:, :, None],
        valid=valid[:, :, None],
        start=panel.months[0],
        lags=(lag,),
    )


def _check_lag(panel: PanelDataset, L: int):
    if not isinstance(L, (int, np.integer)) or L < 1 or L >= panel.n_months:
        raise InvalidLagError(f"Lag must satisfy 1 <= L < {panel.n_months}, got {L}")


def _axis(panel: PanelDataset, n_total: Optional[int]) -> int:
    n_total = panel.n_months if n_total is None else int(n_total)
    if n_total < 1:
        raise InvalidLagError(f"Feature axis must be positive, got {n_total}")
    return n_total


def shift(source: np.ndarray, L: int, n_total: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    out[:, t] = source[:, t - L] on an axis of n_total months.
    Cells with t - L outside the source, or a NaN source, are invalid.
    """
    n, T = source.shape
    out = np.full((n, n_total), np.nan)
    t = np.arange(n_total)
    src = t - L
    ok = (src >= 0) & (src < T)
    out[:, ok] = source[:, src[ok]]
    valid = np.broadcast_to(ok, (n, n_total)) & np.isfinite(out)
    return out, valid


def lag_cases(panel: PanelDataset, L: int, n_total: Optional[int] = None) -> FeatureMatrix:
    """Cases lagged by L months"""
    _check_lag(panel, L)
    n_total = _axis(panel, n_total)
    values, valid = shift(panel.cases.astype(float), L, n_total)
    return _single(panel, f"cases_lag{L}", values, valid, L)


def lag_covariate(panel: PanelDataset, name: str, L: int,
                  n_total: Optional[int] = None) -> FeatureMatrix:
    """A panel covariate lagged by L months; missing source cells are masked"""
    _check_lag(panel, L)
    if name not in panel.covariates:
        raise BadInputError(f"Unknown covariate: {name}")
    n_total = _axis(panel, n_total)
    values, valid = shift(panel.covariates[name], L, n_total)
    return _single(panel, f"{name}_lag{L}", values, valid, L)


def lagged_offset_term(panel: PanelDataset, L: int, n_total: Optional[int] = None) -> FeatureMatrix:
    """log((Y[i, t-L] + 1) / p[i, a[t]])"""
    _check_lag(panel, L)
    n_total = _axis(panel, n_total)
    lagged, valid = shift(panel.cases.astype(float), L, n_total)
    pop = panel.population_padded(n_total)
    with np.errstate(invalid="ignore"):
        values = np.log((lagged + 1.0) / pop)
    return _single(panel, f"offset_lag{L}", values, valid, L)


def cumulative_incidence(panel: PanelDataset, window: int, lag: int = 1,
                         n_total: Optional[int] = None) -> FeatureMatrix:
    """
    log(1 + 100000 * sum of Y over the window ending lag months back / p[i, a[t]]).
    lag=1 sums months t-window .. t-1.
    """
    if window not in CUMULATIVE_WINDOWS:
        raise InvalidLagError(f"Cumulative window must be one of {CUMULATIVE_WINDOWS}, got {window}")
    if window >= panel.n_months:
        raise InvalidLagError(f"Window {window} not shorter than panel length {panel.n_months}")
    _check_lag(panel, lag)
    n_total = _axis(panel, n_total)

    cases = panel.cases.astype(float)
    csum = np.concatenate([np.zeros((panel.n_districts, 1)), np.cumsum(cases, axis=1)], axis=1)
    t = np.arange(n_total)
    hi = t - lag + 1  # exclusive end in cumulative-sum coordinates
    lo = hi - window
    ok = (lo >= 0) & (hi <= panel.n_months)
    totals = np.full((panel.n_districts, n_total), np.nan)
    totals[:, ok] = csum[:, hi[ok]] - csum[:, lo[ok]]

    pop = panel.population_padded(n_total)
    values = np.log1p(INCIDENCE_SCALE * totals / pop)
    valid = np.broadcast_to(ok, values.shape).copy()
    # newest datum consumed is t - lag
    return _single(panel, f"cuminc{window}_lag{lag}", values, valid, lag)


def log_incidence(panel: PanelDataset) -> np.ndarray:
    """log(1 + 100000 * Y / p) on the panel axis"""
    return np.log1p(panel.incidence())


def seasonal_harmonics(panel: PanelDataset, n_total: Optional[int] = None,
                       period: int = 12) -> FeatureMatrix:
    """sin and cos of 2*pi*m/period for each month on the axis"""
    n_total = _axis(panel, n_total)
    _, moy = panel.calendar(n_total)
    angle = 2.0 * np.pi * moy / period
    values = np.stack([np.sin(angle), np.cos(angle)], axis=1)
    values = np.broadcast_to(values[None], (panel.n_districts, n_total, 2)).copy()
    return FeatureMatrix(
        names=("season_sin", "season_cos"),
        values=values,
        valid=np.ones_like(values, dtype=bool),
        start=panel.months[0],
        lags=(None, None),
    )


ReferencePeriod = Union[slice, np.ndarray, Tuple[object, object]]


def _reference_mask(feature: FeatureMatrix, reference_period: ReferencePeriod) -> np.ndarray:
    N = feature.n_total
    if isinstance(reference_period, slice):
        mask = np.zeros(N, dtype=bool)
        mask[reference_period] = True
    elif isinstance(reference_period, tuple):
        lo = int((pd.Period(reference_period[0], freq="M") - feature.start).n)
        hi = int((pd.Period(reference_period[1], freq="M") - feature.start).n)
        mask = np.zeros(N, dtype=bool)
        mask[max(lo, 0):max(hi + 1, 0)] = True
    else:
        mask = np.asarray(reference_period, dtype=bool)
        if mask.shape != (N,):
            raise BadInputError(f"Reference mask must have length {N}")
    if not mask.any():
        raise BadInputError("Reference period is empty")
    return mask


def standardize(feature: FeatureMatrix, reference_period: ReferencePeriod) -> FeatureMatrix:
    """
    Centre and scale each (district, feature) series to mean 0 and sample sd 1
    over the valid cells of the reference period. Zero-variance series map to
    zeros and are flagged in `degenerate`.
    """
    ref = _reference_mask(feature, reference_period)
    use = feature.valid & ref[None, :, None]
    values = np.where(use, feature.values, np.nan)

    count = use.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.nansum(values, axis=1) / np.where(count > 0, count, 1)
        resid = np.where(use, feature.values - mean[:, None, :], 0.0)
        var = (resid ** 2).sum(axis=1) / np.where(count > 1, count - 1, 1)
    sd = np.sqrt(var)
    degenerate = (count < 2) | ~(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))

    scale = np.where(degenerate, 1.0, sd)
    out = (feature.values - mean[:, None, :]) / scale[:, None, :]
    out = np.where(degenerate[:, None, :], 0.0, out)
    out = np.where(feature.valid, out, np.nan)

    return replace(feature, values=out, valid=feature.valid.copy(), degenerate=degenerate)
