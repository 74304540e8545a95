"""
Report data generator for denguecast
Writes the CSV and JSON chart data behind the forecast, Brier and calibration figures
and the model summary tables
"""

import os
import json
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from core.ensemble.artifacts import ForecastCube
from core.ensemble.weights import EnsembleWeights
from core.errors import BadInputError
from core.models.base import crpss
from core.panel.dataset import PanelDataset
from core.scoring.metrics import DEFAULT_CUTOFF, calibration_bins, classification_metrics, labels_from_probability
from core.scoring.table import ScoreTable
from utils.logger import setup_logger

logger = setup_logger("report_generator")

REFERENCE = "reference"
TIMESERIES_HORIZON = 3


class ReportGenerator:
    """Generate plot-ready report files from a finished run"""

    def __init__(self, output_dir: str, scores: ScoreTable, panel: Optional[PanelDataset] = None,
                 cubes: Optional[Dict[str, ForecastCube]] = None, weights: Optional[EnsembleWeights] = None,
                 cutoff: float = DEFAULT_CUTOFF):
        if not len(scores):
            raise BadInputError("Cannot report on an empty score table")
        self.output_dir = output_dir
        self.scores = scores
        self.panel = panel
        self.cubes = cubes or {}
        self.weights = weights
        self.cutoff = cutoff
        os.makedirs(self.output_dir, exist_ok=True)

    def _write(self, frame: pd.DataFrame, name: str, chart: Optional[dict] = None) -> Dict:
        """CSV plus a JSON chart-data file holding the same records"""
        csv_path = os.path.join(self.output_dir, f"{name}.csv")
        frame.to_csv(csv_path, index=False, float_format="%.10g")
        json_path = os.path.join(self.output_dir, f"{name}.json")
        payload = {**(chart or {}), "records": json.loads(frame.to_json(orient="records"))}
        with open(json_path, "w") as f:
            json.dump(payload, f, indent=2)
        logger.info(f"Wrote {name}: {len(frame)} rows")
        return {"status": "success", "filepath": csv_path, "chart_data": json_path, "rows": len(frame)}

    def _outbreak_pairs(self) -> pd.DataFrame:
        """One row per forecast unit and rule with its outbreak probability and observed label"""
        f = self.scores.frame
        f = f[f["metric"].str.startswith(("p_outbreak:", "observed_outbreak:"))].copy()
        if f.empty:
            return pd.DataFrame(columns=["model", "district", "origin_year", "origin_month", "horizon",
                                         "rule", "probability", "outcome"])
        parts = f["metric"].str.split(":", n=1, expand=True)
        f["kind"], f["rule"] = parts[0], parts[1]
        keys = ["model", "district", "origin_year", "origin_month", "horizon", "rule"]
        wide = f.pivot_table(index=keys, columns="kind", values="value", aggfunc="first").reset_index()
        wide = wide.rename(columns={"p_outbreak": "probability", "observed_outbreak": "outcome"})
        return wide.dropna(subset=["probability", "outcome"])

    def timeseries(self, horizon: int = TIMESERIES_HORIZON) -> Dict:
        """Observed counts against each model's median and 95% interval at one horizon"""
        if self.panel is None or not self.cubes:
            raise BadInputError("The forecast time series needs the panel and forecast cubes")
        rows = []
        for model, cube in sorted(self.cubes.items()):
            if horizon not in cube.horizons:
                continue
            j = cube.horizons.index(horizon)
            for k, origin in enumerate(cube.origins):
                if not cube.available(k, j):
                    continue
                target = origin + horizon
                t = self.panel.index_of(target)
                lo, med, hi = np.percentile(cube.samples[k, j], (2.5, 50.0, 97.5), axis=-1, method="linear")
                for d, district in enumerate(cube.districts):
                    observed = float(self.panel.cases[self.panel.district_index(district), t]) \
                        if t < self.panel.n_months else np.nan
                    rows.append({"model": model, "district": district, "year": target.year,
                                 "month": target.month, "horizon": horizon, "observed": observed,
                                 "median": med[d], "lower": lo[d], "upper": hi[d]})
        frame = pd.DataFrame(rows, columns=["model", "district", "year", "month", "horizon", "observed",
                                            "median", "lower", "upper"])
        return self._write(frame, "fig3_timeseries",
                           {"title": f"Forecast cases at a {horizon}-month horizon", "x": "month", "y": "cases"})

    def brier_by_month(self) -> Dict:
        """Mean Brier score per model, rule and target calendar month"""
        table = ScoreTable(self.scores.frame[self.scores.frame["metric"].str.startswith("brier:")])
        if len(table):
            agg = table.aggregate("month")
            agg["rule"] = agg["metric"].str.split(":", n=1).str[1]
            frame = agg.rename(columns={"value": "brier"})[["model", "rule", "month", "brier"]]
        else:
            frame = pd.DataFrame(columns=["model", "rule", "month", "brier"])
        return self._write(frame, "fig4_brier_by_month",
                           {"title": "Brier score averaged by month", "x": "month", "y": "brier"})

    def calibration(self) -> Dict:
        """Reliability bins of outbreak probabilities per model and rule"""
        pairs = self._outbreak_pairs()
        frames = []
        for (model, rule), group in pairs.groupby(["model", "rule"], sort=True):
            bins = calibration_bins(group["probability"], group["outcome"])
            bins.insert(0, "rule", rule)
            bins.insert(0, "model", model)
            frames.append(bins)
        columns = ["model", "rule", "bin_lower", "bin_upper", "predicted_mean", "observed_frequency", "count"]
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
        return self._write(frame, "figS5_calibration",
                           {"title": "Calibration of outbreak probabilities", "x": "predicted_mean",
                            "y": "observed_frequency"})

    def summary_table(self) -> Dict:
        """Per model mean CRPS, bias and diffuseness, CRPSS against the reference, ensemble weight"""
        reference_crps = self.scores.mean(REFERENCE, "crps") if REFERENCE in self.scores.models else np.nan
        rows = []
        for model in self.scores.models:
            crps = self.scores.mean(model, "crps")
            rows.append({
                "model": model,
                "crps": crps,
                "bias": self.scores.mean(model, "bias"),
                "diffuseness": self.scores.mean(model, "diffuseness"),
                "crpss": crpss(crps, reference_crps) if np.isfinite(reference_crps) else np.nan,
                "weight": self.weights.weights.get(model, np.nan) if self.weights else np.nan,
            })
        return self._write(pd.DataFrame(rows), "model_summary", {"title": "Model summary"})

    def heatmaps(self, metric: str = "crps") -> List[Dict]:
        """Mean score by district and by target calendar month"""
        table = self.scores.select(metric=metric)
        out = []
        for by in ("district", "month"):
            agg = table.aggregate(by).rename(columns={"value": metric}).drop(columns="metric")
            out.append(self._write(agg, f"heatmap_{metric}_by_{by}",
                                   {"title": f"Mean {metric} by {by}", "x": by, "y": "model"}))
        return out

    def classification(self) -> Dict:
        """Accuracy, sensitivity, specificity and PPV per model, rule and target year"""
        pairs = self._outbreak_pairs()
        rows = []
        if not pairs.empty:
            target = (pairs["origin_year"] * 12 + pairs["origin_month"] - 1 + pairs["horizon"])
            pairs = pairs.assign(year=(target // 12).astype(int))
            for (model, rule, year), group in pairs.groupby(["model", "rule", "year"], sort=True):
                metrics = classification_metrics(labels_from_probability(group["probability"], self.cutoff),
                                                 group["outcome"])
                rows.append({"model": model, "rule": rule, "year": year, **metrics.to_dict()})
        return self._write(pd.DataFrame(rows), "classification_by_rule",
                           {"title": "Outbreak classification", "cutoff": self.cutoff})

    def generate_all(self) -> Dict[str, Dict]:
        try:
            results = {
                "fig4_brier_by_month": self.brier_by_month(),
                "figS5_calibration": self.calibration(),
                "model_summary": self.summary_table(),
                "classification_by_rule": self.classification(),
            }
            for entry in self.heatmaps():
                results[os.path.splitext(os.path.basename(entry["filepath"]))[0]] = entry
            if self.panel is not None and self.cubes:
                results["fig3_timeseries"] = self.timeseries()
            else:
                logger.warning("No forecasts or panel; skipping the forecast time series")
            return results
        except Exception as e:
            logger.error(f"Failed to generate reports in {self.output_dir}: {str(e)}")
            raise
