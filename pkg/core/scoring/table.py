"""
Score table
Long-format scores per (model, district, origin, horizon, metric) with grouped views
"""

import os
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import BadInputError, MissingArtifactError
from core.models.base import ForecastDistribution
from core.scoring.metrics import bias, crps, diffuseness
from core.thresholds.rules import OutbreakRuleResult, outbreak_probability
from utils.logger import setup_logger

logger = setup_logger("score_table")

COLUMNS = ["model", "district", "origin_year", "origin_month", "horizon", "metric", "value"]
CSV_COLUMNS = COLUMNS[1:]
AGGREGATIONS = ("district", "month", "horizon", "overall")
BOUNDED = {"crps": (0.0, np.inf), "bias": (-1.0, 1.0), "diffuseness": (0.0, np.inf)}


def score_forecast(model: str, forecast: ForecastDistribution, observed: float,
                   rules: Optional[Dict[str, OutbreakRuleResult]] = None) -> List[dict]:
    """
    Score rows for one forecast unit: CRPS, bias, diffuseness, and per outbreak rule the
    outbreak probability, the observed label and the Brier term. Rules whose label is
    undefined contribute no rows.
    """
    forecast.check_scorable()
    base = {"model": model, "district": forecast.district, "origin_year": forecast.origin.year,
            "origin_month": forecast.origin.month, "horizon": forecast.horizon}
    samples = forecast.samples
    rows = [
        {**base, "metric": "crps", "value": crps(samples, observed)},
        {**base, "metric": "bias", "value": bias(samples, observed)},
        {**base, "metric": "diffuseness", "value": diffuseness(samples)},
    ]
    for name, result in (rules or {}).items():
        if not result.defined or result.label is None:
            continue
        p = outbreak_probability(samples, result)
        o = 1.0 if result.label.value == "outbreak" else 0.0
        rows += [
            {**base, "metric": f"p_outbreak:{name}", "value": p},
            {**base, "metric": f"observed_outbreak:{name}", "value": o},
            {**base, "metric": f"brier:{name}", "value": (p - o) ** 2},
        ]
    return rows


class ScoreTable:
    """Rows of (model, district, origin, horizon, metric, value)"""

    def __init__(self, frame: Optional[pd.DataFrame] = None):
        frame = pd.DataFrame(columns=COLUMNS) if frame is None else frame
        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise BadInputError(f"Score table lacks columns: {', '.join(missing)}")
        self.frame = frame[COLUMNS].reset_index(drop=True)
        self.frame = self.frame.astype({"origin_year": int, "origin_month": int, "horizon": int,
                                        "value": float})

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> "ScoreTable":
        return cls(pd.DataFrame(list(rows), columns=COLUMNS))

    @classmethod
    def concat(cls, tables: Sequence["ScoreTable"]) -> "ScoreTable":
        frames = [t.frame for t in tables if len(t)]
        if not frames:
            return cls()
        return cls(pd.concat(frames, ignore_index=True))

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def models(self) -> List[str]:
        return sorted(self.frame["model"].unique().tolist())

    def sorted(self) -> "ScoreTable":
        keys = ["model", "origin_year", "origin_month", "horizon", "district", "metric"]
        return ScoreTable(self.frame.sort_values(keys, kind="mergesort"))

    def select(self, model: Optional[str] = None, metric: Optional[str] = None,
               horizon: Optional[int] = None) -> "ScoreTable":
        f = self.frame
        if model is not None:
            f = f[f["model"] == model]
        if metric is not None:
            f = f[f["metric"] == metric]
        if horizon is not None:
            f = f[f["horizon"] == horizon]
        return ScoreTable(f)

    def violations(self) -> List[str]:
        """Rows outside the range of their metric"""
        out = []
        for metric, (lo, hi) in BOUNDED.items():
            v = self.frame.loc[self.frame["metric"] == metric, "value"]
            bad = v[(v < lo - 1e-12) | (v > hi + 1e-12)]
            if len(bad):
                out.append(f"{len(bad)} {metric} values outside [{lo}, {hi}]")
        brier = self.frame.loc[self.frame["metric"].str.startswith("brier:"), "value"]
        if np.any((brier < 0) | (brier > 1)):
            out.append("brier values outside [0, 1]")
        return out

    def target_month(self) -> pd.Series:
        """Calendar month of year of each row's target month"""
        index = self.frame["origin_year"] * 12 + self.frame["origin_month"] - 1 + self.frame["horizon"]
        return (index % 12 + 1).astype(int)

    def aggregate(self, by: str = "overall") -> pd.DataFrame:
        """
        Mean value per model and metric within groups: by district, by target calendar
        month, by horizon, or overall.
        """
        if by not in AGGREGATIONS:
            raise BadInputError(f"Aggregation must be one of {AGGREGATIONS}, got {by}")
        if not len(self):
            raise BadInputError("Cannot aggregate an empty score table")
        f = self.frame.copy()
        keys = ["model", "metric"]
        if by == "month":
            f["month"] = self.target_month().values
            keys.append("month")
        elif by != "overall":
            keys.append(by)
        return f.groupby(keys, sort=True)["value"].mean().reset_index()

    def mean(self, model: str, metric: str = "crps", horizon: Optional[int] = None) -> float:
        v = self.select(model, metric, horizon).frame["value"]
        return float(v.mean()) if len(v) else float("nan")

    def wide(self) -> pd.DataFrame:
        """One row per model x origin x district x horizon, one column per metric"""
        index = ["model", "origin_year", "origin_month", "district", "horizon"]
        wide = self.frame.pivot_table(index=index, columns="metric", values="value", aggfunc="first")
        wide.columns.name = None
        return wide.reset_index().sort_values(index, kind="mergesort")

    def write(self, scores_dir: str) -> List[str]:
        """scores/<model>.csv in long format plus scores/scores.csv in wide format"""
        os.makedirs(scores_dir, exist_ok=True)
        table = self.sorted()
        paths = []
        for model, group in table.frame.groupby("model", sort=True):
            path = os.path.join(scores_dir, f"{model}.csv")
            group[CSV_COLUMNS].to_csv(path, index=False, float_format="%.10g")
            paths.append(path)
        wide_path = os.path.join(scores_dir, "scores.csv")
        table.wide().to_csv(wide_path, index=False, float_format="%.10g")
        paths.append(wide_path)
        logger.info(f"Wrote {len(table)} score rows to {scores_dir}")
        return paths

    @classmethod
    def read(cls, scores_dir: str, models: Optional[Sequence[str]] = None) -> "ScoreTable":
        if not os.path.isdir(scores_dir):
            raise MissingArtifactError(f"Missing scores directory: {scores_dir}")
        names = models or sorted(f[:-4] for f in os.listdir(scores_dir)
                                 if f.endswith(".csv") and f != "scores.csv")
        frames = []
        for model in names:
            path = os.path.join(scores_dir, f"{model}.csv")
            if not os.path.exists(path):
                raise MissingArtifactError(f"Missing scores for {model}: {path}")
            f = pd.read_csv(path, dtype={"district": str})
            f.insert(0, "model", model)
            frames.append(f)
        if not frames:
            raise MissingArtifactError(f"No scores in {scores_dir}")
        return cls(pd.concat(frames, ignore_index=True))
