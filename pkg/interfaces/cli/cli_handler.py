"""
Command-line interface for denguecast
Ingestion, cross-validation, ensembling, evaluation, forecasting, detection, scoring and reports
"""

import argparse
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.config import RunConfig
from core.deliverables.report_generator import ReportGenerator
from core.ensemble import (
    ENSEMBLE, EnsembleWeights, ForecastCube, RunDirectory, TscvPlan, TscvResult, add_ensemble, pool_cubes,
    rule_results, run_evaluation, run_tscv, score_cube, split_plans, weights_from_scores,
)
from core.ensemble.artifacts import read_json, write_json
from core.errors import BadInputError, DengueCastError, MissingArtifactError, ModelFitError
from core.models.base import forecast_rng
from core.models.registry import model_for, resolve_specs
from core.panel.dataset import PanelDataset
from core.panel.io import read_panel, write_covariate
from core.scoring.metrics import labels_from_probability
from core.scoring.table import ScoreTable
from core.synth.generator import synthetic_panel, write_fixture
from core.thresholds.rules import Label, OutbreakRule, label_panel, thresholds_for
from core.weather.pipeline import ingest_grid, ingest_stations
from integrations.weather_files import read_centroids, read_grid, read_stations
from utils.logger import setup_logger, log_run_event

logger = setup_logger("cli_handler")

COMMANDS = ("synthgen", "ingest-weather", "tscv", "ensemble", "evaluate", "forecast", "detect", "score", "report")
EVALUATION_DIR = "evaluation"
FORECAST_DIR = "forecast"
DETECT_DIR = "detect"


class CliInterface:
    """
    Subcommand dispatcher. Every command loads a RunConfig, writes under --out
    and reports failures through process exit codes.
    """

    def __init__(self):
        self.parser = argparse.ArgumentParser(prog="denguecast",
                                              description="District-level dengue forecasting engine")
        self.handlers = {
            "synthgen": self.synthgen,
            "ingest-weather": self.ingest_weather,
            "tscv": self.tscv,
            "ensemble": self.ensemble,
            "evaluate": self.evaluate,
            "forecast": self.forecast,
            "detect": self.detect,
            "score": self.score,
            "report": self.report,
        }
        self._setup_commands()
        logger.info("Command-line interface initialized")

    def _setup_commands(self):
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", help="TOML run configuration")
        common.add_argument("--seed", type=int, help="Random seed (unsigned 64-bit)")
        common.add_argument("--out", help="Output directory")
        common.add_argument("--jobs", type=int, help="Worker processes (-1 for all cores)")
        commands = self.parser.add_subparsers(dest="command", required=True)
        for name in COMMANDS:
            commands.add_parser(name, parents=[common], help=self.handlers[name].__doc__)

    # Shared plumbing

    def load_config(self, args: argparse.Namespace) -> RunConfig:
        return RunConfig.load(args.config, seed=args.seed, out_dir=args.out, jobs=args.jobs)

    def load_panel(self, config: RunConfig) -> PanelDataset:
        config.check_paths(["panel", "adjacency"])
        if config.paths.covariates:
            config.check_paths(["covariates"])
        return read_panel(config.paths.panel, config.paths.adjacency, list(config.paths.covariates.values()))

    def input_files(self, config: RunConfig) -> List[str]:
        return [config.paths.panel, config.paths.adjacency, *config.paths.covariates.values()]

    def outbreak_rules(self, config: RunConfig) -> List[OutbreakRule]:
        """Configured rules, with one rule per fixed-rate level"""
        th = config.thresholds
        rules = []
        for kind in th.rules:
            if kind == "fixed_rate":
                rules.extend(OutbreakRule("fixed_rate", level=level) for level in th.fixed_rate_levels)
            elif kind == "percentile_95":
                rules.append(OutbreakRule(kind, retrospective=th.retrospective_percentile))
            else:
                rules.append(OutbreakRule(kind, n_sims=th.n_sims))
        return rules

    def load_plans(self, config: RunConfig):
        p = config.plan
        return split_plans(p.initial_training_end, p.cv_start, p.cv_end, p.eval_start, p.eval_end, p.horizons)

    def load_cubes(self, run: RunDirectory) -> Dict[str, ForecastCube]:
        models = run.models()
        if not models:
            raise MissingArtifactError(f"Missing forecasts in {run.forecasts}; run tscv first")
        return {m: run.read_cube(m) for m in models}

    def write_result(self, run: RunDirectory, config: RunConfig, result: TscvResult, phase: str) -> None:
        run.write_cubes(list(result.cubes.values()))
        result.scores.write(run.scores)
        run.write_manifest(config.seed, config.canonical(), self.input_files(config),
                           audit=result.audit.to_dict(), failures=result.failures, extra={"phase": phase})
        if not result.audit.passed:
            raise DengueCastError(f"Leakage audit failed: {len(result.audit.violations)} forecasts read past their origin")

    # Commands

    def synthgen(self, config: RunConfig) -> Dict:
        """Write a synthetic panel with weather fixtures and a runnable config"""
        s = config.synth
        data = synthetic_panel(n_districts=s.n_districts, n_months=s.n_months, start=s.start, seed=config.seed,
                               n_stations=s.n_stations, grid_size=s.grid_size)
        paths = write_fixture(data, config.out_dir, config.seed)
        return {"status": "success", "config": paths["config"], "files": len(paths)}

    def ingest_weather(self, config: RunConfig) -> Dict:
        """Interpolate daily weather to district centroids and write monthly covariates"""
        config.check_paths(["centroids"])
        centroids = read_centroids(config.paths.centroids)
        w = config.weather
        if w.mode == "station":
            config.check_paths(["stations"])
            result = ingest_stations(read_stations(config.paths.stations), centroids, w.variables,
                                     w.nlags, w.missing_fraction, config.jobs)
        else:
            missing = [v for v in w.variables if v not in config.paths.grids]
            if missing:
                raise BadInputError(f"No grid file configured for {', '.join(missing)}")
            config.check_paths(["grids"])
            grids = {v: read_grid(config.paths.grids[v], v) for v in w.variables}
            result = ingest_grid(grids, centroids, w.missing_fraction)

        out = os.path.join(config.out_dir, "covariates")
        written = []
        for variable, frame in result.covariates.items():
            path = os.path.join(out, f"{variable}.csv")
            write_covariate(frame, variable, path)
            written.append(path)
        os.makedirs(out, exist_ok=True)
        result.flagged_months.to_csv(os.path.join(out, "flagged_months.csv"), index=False)
        log_run_event(logger, config.out_dir, "weather_ingested", {
            "mode": w.mode, "variables": list(result.covariates),
            "flagged_months": len(result.flagged_months),
            "skipped_days": {k: len(v) for k, v in result.skipped_days.items()},
        })
        return {"status": "success", "files": written}

    def tscv(self, config: RunConfig) -> Dict:
        """Rolling-origin cross-validation of every configured preset"""
        panel = self.load_panel(config)
        cv, evaluation = self.load_plans(config)
        specs = resolve_specs(config.models.presets, config.models.overrides)
        result = run_tscv(panel, specs, cv, config.seed, config.models.n_samples,
                          self.outbreak_rules(config), config.jobs)
        run = RunDirectory(config.out_dir)
        write_json(run.plan, {"cv": cv.to_dict(), "evaluation": evaluation.to_dict()})
        self.write_result(run, config, result, "cv")
        return {"status": "success", "models": sorted(result.cubes), "failed_fits": len(result.failures)}

    def ensemble(self, config: RunConfig) -> Dict:
        """Freeze inverse-CRPS weights from cross-validation and add the pooled ensemble"""
        run = RunDirectory(config.out_dir)
        members = config.models.members
        cubes = self.load_cubes(run)
        cubes.pop(ENSEMBLE, None)
        scores = ScoreTable.read(run.scores, sorted(cubes))
        weights = weights_from_scores(scores, members, config.models.per_horizon_weights).freeze()
        with open(run.weights, "w") as f:
            f.write(weights.to_json())

        panel = self.load_panel(config)
        plan = TscvPlan.from_dict(read_json(run.plan, "tscv plan")["cv"])
        result = add_ensemble(TscvResult(plan, scores, cubes), panel, weights, config.seed,
                              config.models.n_pooled, self.outbreak_rules(config),
                              config.models.per_horizon_weights, config.jobs)
        run.write_cubes([result.cubes[ENSEMBLE]])
        result.scores.write(run.scores)
        log_run_event(logger, run.root, "weights_frozen", {"weights": weights.weights})
        return {"status": "success", "weights": weights.weights}

    def evaluate(self, config: RunConfig) -> Dict:
        """Refit components over the evaluation window and pool them with frozen weights"""
        weights_path = config.paths.weights or RunDirectory(config.out_dir).weights
        if not os.path.exists(weights_path):
            raise MissingArtifactError(f"Missing ensemble weights: {weights_path}; run ensemble first")
        with open(weights_path) as f:
            weights = EnsembleWeights.from_json(f.read())

        panel = self.load_panel(config)
        cv, evaluation = self.load_plans(config)
        specs = resolve_specs(config.models.presets, config.models.overrides)
        result = run_evaluation(panel, specs, weights, evaluation, config.seed, config.models.n_samples,
                                config.models.n_pooled, self.outbreak_rules(config), cv,
                                config.models.per_horizon_weights, config.jobs)
        run = RunDirectory(os.path.join(config.out_dir, EVALUATION_DIR))
        write_json(run.plan, {"cv": cv.to_dict(), "evaluation": evaluation.to_dict()})
        self.write_result(run, config, result, "evaluation")
        return {"status": "success", "run_dir": run.root, "failed_fits": len(result.failures)}

    def forecast(self, config: RunConfig) -> Dict:
        """Real-time forecasts from the last panel month, plus the ensemble when weights exist"""
        panel = self.load_panel(config)
        origin_t = panel.n_months - 1
        origin = panel.month_at(origin_t)
        horizons = tuple(config.plan.horizons)
        n = config.models.n_samples
        cubes: Dict[str, ForecastCube] = {}
        for spec in resolve_specs(config.models.presets, config.models.overrides):
            spec.check_panel(panel)
            model = model_for(spec.family)
            cube = ForecastCube.empty(spec.name, [origin], horizons, panel.districts, n)
            try:
                fitted = model.fit(spec, panel, origin_t, jobs=1)
            except ModelFitError as e:
                logger.warning(f"Failed to fit {spec.name} at {origin}: {e}; no real-time forecast")
                continue
            for j, h in enumerate(horizons):
                draws = model.forecast(fitted, panel, origin_t, h, n, forecast_rng(config.seed, spec, origin_t, h))
                for d, district in enumerate(panel.districts):
                    cube.samples[0, j, d] = draws[district].samples
            cubes[spec.name] = cube

        weights_path = config.paths.weights or RunDirectory(config.out_dir).weights
        if os.path.exists(weights_path):
            with open(weights_path) as f:
                weights = EnsembleWeights.from_json(f.read())
            cubes[ENSEMBLE] = pool_cubes(cubes, weights, config.seed, config.models.n_pooled,
                                         config.models.per_horizon_weights)
        else:
            logger.info(f"No weights at {weights_path}; components only")

        out = os.path.join(config.out_dir, FORECAST_DIR)
        os.makedirs(out, exist_ok=True)
        files = []
        for name, cube in sorted(cubes.items()):
            path = os.path.join(out, f"{name}.csv")
            cube.to_frame().to_csv(path, index=False)
            files.append(path)
        log_run_event(logger, config.out_dir, "forecast_written", {"origin": str(origin), "models": sorted(cubes)})
        return {"status": "success", "origin": str(origin), "files": files}

    def _probability_source(self, config: RunConfig):
        """Forecast cube used for outbreak probabilities: the ensemble if present"""
        run = RunDirectory(config.out_dir)
        try:
            models = run.models()
        except MissingArtifactError:
            return None
        if not models:
            return None
        return run.read_cube(ENSEMBLE if ENSEMBLE in models else models[0])

    def _realtime_source(self, config: RunConfig) -> Optional[pd.DataFrame]:
        out = os.path.join(config.out_dir, FORECAST_DIR)
        for name in (ENSEMBLE, *config.models.presets):
            path = os.path.join(out, f"{name}.csv")
            if os.path.exists(path):
                return pd.read_csv(path)
        return None

    def detect(self, config: RunConfig) -> Dict:
        """One labels CSV per outbreak rule, with forecast outbreak probabilities"""
        panel = self.load_panel(config)
        h = config.thresholds.detect_horizon
        cutoff = config.thresholds.probability_cutoff
        cube = self._probability_source(config)
        realtime = self._realtime_source(config)
        if cube is None and realtime is None:
            logger.warning("No forecasts found; writing labels without outbreak probabilities")

        out = os.path.join(config.out_dir, DETECT_DIR)
        os.makedirs(out, exist_ok=True)
        files = []
        for rule in self.outbreak_rules(config):
            frame = label_panel(panel, rule, seed=config.seed, jobs=config.jobs)
            frame["probability"] = np.nan
            if cube is not None and h in cube.horizons:
                self._fill_probabilities(frame, panel, cube, h)
            if realtime is not None:
                frame = pd.concat([frame, self._realtime_rows(panel, rule, realtime, h, config.seed)],
                                  ignore_index=True)
            frame["predicted_outbreak"] = labels_from_probability(frame["probability"], cutoff)
            path = os.path.join(out, f"{rule.name}.csv")
            frame.to_csv(path, index=False, float_format="%.10g")
            files.append(path)
        log_run_event(logger, config.out_dir, "detection_written", {"rules": len(files), "horizon": h})
        return {"status": "success", "files": files}

    def _fill_probabilities(self, frame: pd.DataFrame, panel: PanelDataset, cube: ForecastCube, h: int):
        """P(cases > threshold) for labelled months forecast h months ahead"""
        j = cube.horizons.index(h)
        position = {(d, y, m): i for i, (d, y, m) in enumerate(zip(frame["district"], frame["year"], frame["month"]))}
        for k, origin in enumerate(cube.origins):
            target = origin + h
            if not cube.available(k, j):
                continue
            for d, district in enumerate(cube.districts):
                i = position.get((district, target.year, target.month))
                threshold = frame["threshold"].iat[i] if i is not None else np.nan
                if np.isfinite(threshold):
                    frame.iat[i, frame.columns.get_loc("probability")] = float(
                        np.mean(cube.samples[k, j, d] > threshold))

    def _realtime_rows(self, panel: PanelDataset, rule: OutbreakRule, realtime: pd.DataFrame,
                       h: int, seed: int) -> pd.DataFrame:
        """Unobserved target months of the real-time forecast"""
        rows = realtime[realtime["horizon"] == h]
        if rows.empty:
            return pd.DataFrame()
        origin = pd.Period(year=int(rows["origin_year"].iat[0]), month=int(rows["origin_month"].iat[0]), freq="M")
        target = origin + h
        target_t = panel.index_of(origin) + h
        thresholds = thresholds_for(panel, rule, [target_t], seed=seed)[:, 0]
        records = []
        for i, district in enumerate(panel.districts):
            samples = rows.loc[rows["district"] == district, "value"].to_numpy()
            threshold = thresholds[i]
            records.append({
                "district": district, "year": target.year, "month": target.month, "rule": rule.name,
                "threshold": threshold, "label": Label.UNDEFINED.value, "history_size": np.nan,
                "probability": float(np.mean(samples > threshold)) if np.isfinite(threshold) and len(samples) else np.nan,
            })
        return pd.DataFrame(records)

    def score(self, config: RunConfig) -> Dict:
        """Rescore every saved forecast cube against the panel"""
        run = RunDirectory(config.out_dir)
        if not os.path.isdir(run.forecasts):
            raise MissingArtifactError(f"Missing forecasts in {run.forecasts}; run tscv first")
        cubes = self.load_cubes(run)
        panel = self.load_panel(config)
        targets = sorted({panel.index_of(o) + h for cube in cubes.values() for o in cube.origins for h in cube.horizons})
        results = rule_results(panel, self.outbreak_rules(config), targets, seed=config.seed, jobs=config.jobs)
        scores = ScoreTable.concat([score_cube(cube, panel, results) for _, cube in sorted(cubes.items())])
        scores.write(run.scores)
        return {"status": "success", "models": sorted(cubes), "rows": len(scores)}

    def report(self, config: RunConfig) -> Dict:
        """Plot-ready CSV and JSON files for a finished run"""
        run = RunDirectory(config.out_dir)
        scores = ScoreTable.read(run.scores)
        cubes = self.load_cubes(run)
        weights = None
        if os.path.exists(run.weights):
            with open(run.weights) as f:
                weights = EnsembleWeights.from_json(f.read())
        panel = self.load_panel(config) if config.paths.panel else None
        reports = ReportGenerator(run.reports, scores, panel, cubes, weights,
                                  config.thresholds.probability_cutoff).generate_all()
        return {"status": "success", "files": sorted(r["filepath"] for r in reports.values())}

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """Parse, dispatch and map failures to exit codes 0, 1, 2 or 3"""
        args = self.parser.parse_args(argv)
        try:
            config = self.load_config(args)
            result = self.handlers[args.command](config)
            logger.info(f"{args.command} finished: {result}")
            return 0
        except DengueCastError as e:
            logger.error(f"{args.command} failed: {e}")
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
        except Exception as e:
            logger.exception(f"{args.command} failed with an internal error: {e}")
            print(f"internal error: {e}", file=sys.stderr)
            return 1
