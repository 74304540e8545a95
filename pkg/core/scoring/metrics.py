"""
Sample-based scoring rules
CRPS, bias, diffuseness, Brier score, calibration bins and classification metrics
"""

from dataclasses import dataclass, asdict
from typing import Optional, Tuple

import numpy as np
import pandas as pd
import properscoring as ps

from core.errors import BadInputError
from utils.logger import setup_logger

logger = setup_logger("scoring")

N_CALIBRATION_BINS = 10
DEFAULT_CUTOFF = 0.5


def _samples(samples, minimum: int = 1) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.shape[-1] < minimum:
        raise BadInputError(f"Need at least {minimum} samples, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise BadInputError("Samples must be finite")
    return x


def crps(samples, observed):
    """
    Empirical CRPS, mean|X - y| - 0.5 * mean|X - X'| over all ordered sample pairs.
    samples may be (S,) with a scalar observation or (m, S) with m observations.
    """
    x = _samples(samples)
    value = ps.crps_ensemble(np.asarray(observed, dtype=float), x)
    return float(value) if np.ndim(value) == 0 else np.asarray(value)


def bias(samples, observed):
    """1 - 2 F(y) with the empirical CDF taking half the mass of ties"""
    x = _samples(samples)
    y = np.asarray(observed, dtype=float)[..., None]
    below = (x < y).sum(axis=-1)
    ties = (x == y).sum(axis=-1)
    value = 1.0 - 2.0 * (below + 0.5 * ties) / x.shape[-1]
    return float(value) if np.ndim(value) == 0 else value


def mean_abs_difference(samples) -> np.ndarray:
    """mean |X - X'| over all n^2 ordered pairs, from the sorted samples"""
    x = np.sort(_samples(samples), axis=-1)
    n = x.shape[-1]
    coef = 2.0 * np.arange(n) - n + 1.0
    return 2.0 * (x * coef).sum(axis=-1) / n ** 2


def diffuseness(samples):
    """mean |X - X'| / (1 + mean X)"""
    x = _samples(samples, minimum=2)
    value = mean_abs_difference(x) / (1.0 + x.mean(axis=-1))
    return float(value) if np.ndim(value) == 0 else value


def _binary(probabilities, outcomes) -> Tuple[np.ndarray, np.ndarray, int]:
    """Drop undefined (NaN) outcomes; returns (p, o, dropped)"""
    p = np.asarray(probabilities, dtype=float).ravel()
    o = np.asarray(outcomes, dtype=float).ravel()
    if p.shape != o.shape:
        raise BadInputError("Probabilities and outcomes differ in length")
    keep = np.isfinite(p) & np.isfinite(o)
    p, o = p[keep], o[keep]
    if np.any((p < 0) | (p > 1)):
        raise BadInputError("Probabilities must lie in [0, 1]")
    if np.any((o != 0) & (o != 1)):
        raise BadInputError("Outcomes must be 0 or 1")
    return p, o, int((~keep).sum())


def brier(probabilities, outcomes) -> float:
    """Mean (p - o)^2 over defined outcomes; NaN when nothing is left"""
    p, o, dropped = _binary(probabilities, outcomes)
    if dropped:
        logger.info(f"Brier score: dropped {dropped} undefined labels")
    if p.size == 0:
        logger.warning("Brier score undefined: no defined outcomes")
        return float("nan")
    return float(np.mean(ps.brier_score(o, p)))


def calibration_bins(probabilities, outcomes, n_bins: int = N_CALIBRATION_BINS) -> pd.DataFrame:
    """
    Reliability table over half-open bins [k/n, (k+1)/n), the last closed at 1.
    Empty bins carry count 0 and NaN means.
    """
    p, o, _ = _binary(probabilities, outcomes)
    idx = np.minimum(np.floor(p * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    p_sum = np.bincount(idx, weights=p, minlength=n_bins)
    o_sum = np.bincount(idx, weights=o, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        predicted = np.where(counts > 0, p_sum / counts, np.nan)
        observed = np.where(counts > 0, o_sum / counts, np.nan)
    edges = np.arange(n_bins + 1) / n_bins
    return pd.DataFrame({
        "bin_lower": edges[:-1],
        "bin_upper": edges[1:],
        "predicted_mean": predicted,
        "observed_frequency": observed,
        "count": counts,
    })


def labels_from_probability(probabilities, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """1 where the outbreak probability reaches the cutoff; NaN stays NaN"""
    p = np.asarray(probabilities, dtype=float)
    return np.where(np.isfinite(p), (p >= cutoff).astype(float), np.nan)


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    ppv: float
    tp: int
    fp: int
    tn: int
    fn: int
    dropped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else float("nan")


def classification_metrics(predicted, observed) -> ClassificationMetrics:
    """Confusion-matrix ratios; a ratio with a zero denominator is NaN"""
    pred, obs, dropped = _binary(predicted, observed)
    tp = int(np.sum((pred == 1) & (obs == 1)))
    fp = int(np.sum((pred == 1) & (obs == 0)))
    tn = int(np.sum((pred == 0) & (obs == 0)))
    fn = int(np.sum((pred == 0) & (obs == 1)))
    return ClassificationMetrics(
        accuracy=_ratio(tp + tn, tp + fp + tn + fn),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        ppv=_ratio(tp, tp + fp),
        tp=tp, fp=fp, tn=tn, fn=fn, dropped=dropped,
    )
