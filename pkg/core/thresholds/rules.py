"""
Outbreak threshold rules
Four outbreak definitions producing per district-month thresholds and labels
"""

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm
from joblib import Parallel, delayed

from core.errors import BadInputError
from core.panel.dataset import INCIDENCE_SCALE, PanelDataset
from utils.logger import setup_logger

logger = setup_logger("thresholds")

FIXED_RATE_LEVELS = (20, 50, 100, 150, 200, 300)
RULE_KINDS = ("mean_plus_2sd", "percentile_95", "poisson_glm", "fixed_rate")

MEAN_2SD_WINDOW = 5
MEAN_2SD_MIN_VALUES = 3
MEAN_2SD_LOOKBACK_YEARS = 10
PERCENTILE_MIN_VALUES = 5
POISSON_MIN_MONTHS = 24
POISSON_QUANTILE = 97.5
POISSON_MAX_VARIANCE = 1e4
DEFAULT_POISSON_SIMS = 10000


class Label(str, Enum):
    OUTBREAK = "outbreak"
    NO_OUTBREAK = "no_outbreak"
    UNDEFINED = "undefined"


@dataclass(frozen=True)
class OutbreakRule:
    """An outbreak definition and its parameters"""
    kind: str
    level: Optional[int] = None
    n_sims: int = DEFAULT_POISSON_SIMS
    seasonal: bool = True
    parameter_uncertainty: bool = True
    retrospective: bool = False

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise BadInputError(f"Unknown outbreak rule: {self.kind}")
        if self.kind == "fixed_rate" and self.level not in FIXED_RATE_LEVELS:
            raise BadInputError(f"Fixed rate level must be one of {FIXED_RATE_LEVELS}, got {self.level}")
        if self.kind == "poisson_glm" and self.n_sims < 1:
            raise BadInputError("Poisson rule needs at least one simulation")

    @property
    def name(self) -> str:
        if self.kind == "fixed_rate":
            return f"fixed_rate_{self.level}"
        return self.kind

    @classmethod
    def from_name(cls, name: str, **kwargs) -> "OutbreakRule":
        if name.startswith("fixed_rate_"):
            return cls(kind="fixed_rate", level=int(name.rsplit("_", 1)[1]), **kwargs)
        return cls(kind=name, **kwargs)


@dataclass(frozen=True)
class OutbreakRuleResult:
    """Threshold and label for one district-month"""
    threshold: float
    label: Label
    history_size: int
    observed: Optional[float] = None
    diagnostic: str = ""

    @property
    def defined(self) -> bool:
        return self.label != Label.UNDEFINED


def _label(observed: Optional[float], threshold: float, history_size: int,
           diagnostic: str = "") -> OutbreakRuleResult:
    if observed is None or not np.isfinite(threshold):
        # months not yet observed keep their threshold but carry no label
        return OutbreakRuleResult(float(threshold), Label.UNDEFINED, history_size, observed, diagnostic)
    label = Label.OUTBREAK if observed > threshold else Label.NO_OUTBREAK
    return OutbreakRuleResult(float(threshold), label, history_size, float(observed), diagnostic)


def _undefined(history_size: int, observed: Optional[float], diagnostic: str) -> OutbreakRuleResult:
    return OutbreakRuleResult(float("nan"), Label.UNDEFINED, history_size, observed, diagnostic)


def _observed(panel: PanelDataset, i: int, t: int) -> Optional[float]:
    return float(panel.cases[i, t]) if 0 <= t < panel.n_months else None


def mean_2sd_window(values: Sequence[float], candidates: Sequence[int]) -> List[int]:
    """
    Select the history window from candidate indices (most recent first).

    Takes the five most recent candidates, then repeatedly drops any value above
    the window's provisional mean + 2 sd and refills from older candidates until
    nothing changes.
    """
    pool = list(candidates)
    dropped: set = set()
    while True:
        window = [k for k in pool if k not in dropped][:MEAN_2SD_WINDOW]
        if len(window) < MEAN_2SD_MIN_VALUES:
            return window
        v = np.array([values[k] for k in window], dtype=float)
        provisional = v.mean() + 2.0 * v.std(ddof=1)
        above = [k for k, x in zip(window, v) if x > provisional]
        if not above:
            return window
        dropped.update(above)


def mean_2sd_sequence(values: Sequence[float]) -> List[OutbreakRuleResult]:
    """
    mean + 2 sd rule over one district's same-calendar-month values, one per year,
    oldest first. Years labeled outbreak are excluded from later histories and
    replaced by older years within a ten-year lookback.
    """
    values = [float(v) for v in values]
    outbreak_years: set = set()
    results = []
    for j, observed in enumerate(values):
        candidates = [k for k in range(j - 1, max(j - MEAN_2SD_LOOKBACK_YEARS, 0) - 1, -1)
                      if k not in outbreak_years]
        window = mean_2sd_window(values, candidates)
        if len(window) < MEAN_2SD_MIN_VALUES:
            results.append(_undefined(len(window), observed, "insufficient history"))
            continue
        v = np.array([values[k] for k in window])
        result = _label(observed, float(v.mean() + 2.0 * v.std(ddof=1)), len(window))
        if result.label == Label.OUTBREAK:
            outbreak_years.add(j)
        results.append(result)
    return results


def mean_2sd_threshold(panel: PanelDataset, district: str, t: int) -> OutbreakRuleResult:
    """Mean plus two sample standard deviations of the same month in earlier years"""
    i = panel.district_index(district)
    idx = np.arange(t % 12, t + 1, 12)
    if np.any(idx[:-1] >= panel.n_months):
        raise BadInputError(f"Month {t} lies more than a year past the panel end")
    observed = _observed(panel, i, t)
    history = [float(panel.cases[i, k]) for k in idx[:-1]]
    # the evaluated year's own value never enters its threshold
    result = mean_2sd_sequence(history + [0.0 if observed is None else observed])[-1]
    if observed is None:
        return OutbreakRuleResult(result.threshold, Label.UNDEFINED, result.history_size, None, result.diagnostic)
    return result


def percentile95_threshold(panel: PanelDataset, district: str, t: int,
                           retrospective: bool = False) -> OutbreakRuleResult:
    """
    Type-7 95th percentile of the same calendar month in earlier years.
    retrospective=True uses every year of the panel, later ones included.
    """
    i = panel.district_index(district)
    if retrospective:
        idx = np.arange(t % 12, panel.n_months, 12)
    else:
        idx = np.arange(t % 12, min(t, panel.n_months), 12)
    history = panel.cases[i, idx].astype(float)
    observed = _observed(panel, i, t)
    if len(history) < PERCENTILE_MIN_VALUES:
        return _undefined(len(history), observed, "insufficient history")
    threshold = float(np.percentile(history, 95, method="linear"))
    return _label(observed, threshold, len(history))


def _month_design(months: np.ndarray, seasonal: bool) -> np.ndarray:
    """One indicator column per calendar month (cell-means coding), or a single intercept"""
    if not seasonal:
        return np.ones((len(months), 1))
    return (months[:, None] == np.arange(1, 13)[None, :]).astype(float)


def poisson_threshold(panel: PanelDataset, district: str, t: int, n_sims: int = DEFAULT_POISSON_SIMS,
                      rng: Optional[np.random.Generator] = None, seasonal: bool = True,
                      parameter_uncertainty: bool = True) -> OutbreakRuleResult:
    """
    97.5th percentile of simulated counts from a Poisson GLM fit on the months before t.

    The GLM has a month-of-year factor (unless seasonal=False) and a log-population
    offset. Each simulation draws the target month's log rate from the MLE's
    asymptotic Gaussian, then one Poisson count.

    The factor is coded one coefficient per calendar month, so the Fisher information
    is diagonal and months never inform each other. A calendar month whose history is
    all zero has no finite MLE; it is left out of the fit, and when it is the target
    month the threshold is a degenerate 0.
    """
    rng = rng if rng is not None else np.random.default_rng()
    i = panel.district_index(district)
    hist_end = min(t, panel.n_months)
    observed = _observed(panel, i, t)
    if hist_end < POISSON_MIN_MONTHS:
        return _undefined(hist_end, observed, "insufficient history")

    y = panel.cases[i, :hist_end].astype(float)
    if y.sum() == 0:
        logger.info(f"Poisson threshold for {district} at {t}: all-zero history, fit degenerate")
        return _undefined(hist_end, observed, "degenerate fit: all-zero history")

    _, moy = panel.calendar(max(t + 1, panel.n_months))
    X = _month_design(moy[:hist_end], seasonal)
    offset = np.log(panel.population_padded(max(t + 1, panel.n_months))[i])
    target_col = int(np.argmax(_month_design(moy[t:t + 1], seasonal)[0]))

    support = X.T @ y > 0
    if not support[target_col]:
        logger.info(f"Poisson threshold for {district} at {t}: calendar month has an all-zero history")
        return _label(observed, 0.0, hist_end, "degenerate fit: all-zero calendar month")
    rows = X[:, support].any(axis=1)
    X_fit = X[rows][:, support]
    k = int(np.flatnonzero(support).tolist().index(target_col))

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sm.GLM(y[rows], X_fit, family=sm.families.Poisson(), offset=offset[:hist_end][rows]).fit()
    except Exception as e:
        logger.warning(f"Poisson threshold fit failed for {district} at {t}: {str(e)}")
        return _undefined(hist_end, observed, f"fit failed: {e}")

    beta = float(np.asarray(res.params)[k])
    var = float(np.asarray(res.cov_params())[k, k])
    if not getattr(res, "converged", True) or not np.isfinite(beta) or not np.isfinite(var) \
            or var > POISSON_MAX_VARIANCE:
        logger.warning(f"Poisson threshold fit for {district} at {t} did not converge")
        return _undefined(hist_end, observed, "non-convergence")

    if parameter_uncertainty:
        eta = rng.normal(beta, np.sqrt(var), size=n_sims) + offset[t]
    else:
        eta = np.full(n_sims, beta + offset[t])
    sims = rng.poisson(np.exp(eta))
    threshold = float(np.percentile(sims, POISSON_QUANTILE, method="linear"))
    return _label(observed, threshold, hist_end)


def fixed_rate_threshold(panel: PanelDataset, district: str, t: int, level: int) -> OutbreakRuleResult:
    """level cases per 100,000 population"""
    if level not in FIXED_RATE_LEVELS:
        raise BadInputError(f"Fixed rate level must be one of {FIXED_RATE_LEVELS}, got {level}")
    i = panel.district_index(district)
    pop = panel.population_padded(max(t + 1, panel.n_months))[i, t]
    return _label(_observed(panel, i, t), level * pop / INCIDENCE_SCALE, 0)


def evaluate_rule(rule: OutbreakRule, panel: PanelDataset, district: str, t: int,
                  rng: Optional[np.random.Generator] = None) -> OutbreakRuleResult:
    if rule.kind == "mean_plus_2sd":
        return mean_2sd_threshold(panel, district, t)
    if rule.kind == "percentile_95":
        return percentile95_threshold(panel, district, t, retrospective=rule.retrospective)
    if rule.kind == "poisson_glm":
        return poisson_threshold(panel, district, t, rule.n_sims, rng,
                                 seasonal=rule.seasonal, parameter_uncertainty=rule.parameter_uncertainty)
    return fixed_rate_threshold(panel, district, t, rule.level)


def outbreak_probability(samples: np.ndarray, result: OutbreakRuleResult) -> float:
    """Share of predictive samples strictly above the threshold; NaN when undefined"""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise BadInputError("Outbreak probability needs at least one sample")
    if not np.isfinite(result.threshold):
        return float("nan")
    return float(np.mean(samples > result.threshold))


def _rule_id(rule: OutbreakRule) -> int:
    return RULE_KINDS.index(rule.kind) * 1000 + (rule.level or 0)


def _label_district(rule: OutbreakRule, panel: PanelDataset, i: int, months: Sequence[int],
                    seed: int) -> List[dict]:
    district = panel.districts[i]
    rows = []
    if rule.kind == "mean_plus_2sd":
        by_month: Dict[int, List[OutbreakRuleResult]] = {}
        for m0 in sorted({t % 12 for t in months}):
            idx = np.arange(m0, panel.n_months, 12)
            by_month[m0] = mean_2sd_sequence(panel.cases[i, idx])
        results = {t: by_month[t % 12][t // 12] for t in months}
    else:
        results = {}
        for t in months:
            rng = np.random.default_rng(np.random.SeedSequence([seed, _rule_id(rule), i, t]))
            results[t] = evaluate_rule(rule, panel, district, t, rng)
    for t in months:
        r = results[t]
        period = panel.months[t]
        rows.append({
            "district": district,
            "year": period.year,
            "month": period.month,
            "rule": rule.name,
            "threshold": r.threshold,
            "label": r.label.value,
            "history_size": r.history_size,
        })
    return rows


def label_panel(panel: PanelDataset, rule: OutbreakRule, months: Optional[Sequence[int]] = None,
                seed: int = 0, jobs: int = 1) -> pd.DataFrame:
    """
    Thresholds and labels for every district over the given month indices.
    Columns: district, year, month, rule, threshold, label, history_size.
    """
    months = list(range(panel.n_months)) if months is None else [int(t) for t in months]
    if any(t < 0 or t >= panel.n_months for t in months):
        raise BadInputError("Labels can only be computed for months inside the panel")
    chunks = Parallel(n_jobs=jobs)(
        delayed(_label_district)(rule, panel, i, months, seed) for i in range(panel.n_districts)
    )
    frame = pd.DataFrame([row for chunk in chunks for row in chunk])
    undefined = int((frame["label"] == Label.UNDEFINED.value).sum()) if len(frame) else 0
    logger.info(f"Labeled {len(frame)} district-months with {rule.name} ({undefined} undefined)")
    return frame


def thresholds_for(panel: PanelDataset, rule: OutbreakRule, targets: Sequence[int],
                   seed: int = 0) -> np.ndarray:
    """
    (n districts, len(targets)) threshold values for target month indices,
    which may run past the panel end. NaN where undefined.
    """
    out = np.full((panel.n_districts, len(targets)), np.nan)
    for i, district in enumerate(panel.districts):
        for k, t in enumerate(targets):
            rng = np.random.default_rng(np.random.SeedSequence([seed, _rule_id(rule), i, int(t)]))
            out[i, k] = evaluate_rule(rule, panel, district, int(t), rng).threshold
    return out
