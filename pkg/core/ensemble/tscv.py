"""
Time series cross-validation
Rolling-origin fitting, forecasting and scoring of model specs, ensemble pooling and
the frozen-weight out-of-sample evaluation
"""

import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.ensemble.artifacts import ForecastCube
from core.ensemble.pooling import N_POOLED, pool_samples
from core.ensemble.weights import EnsembleWeights
from core.errors import DengueCastError, PlanValidationError, SpecError, WeightsFrozenError
from core.models.base import HORIZONS, ModelSpec, forecast_rng, newest_read
from core.models.registry import model_for
from core.panel.dataset import PanelDataset
from core.scoring.table import ScoreTable, score_forecast
from core.thresholds.rules import Label, OutbreakRule, OutbreakRuleResult, label_panel
from utils.logger import setup_logger, log_fit_event, log_run_event

logger = setup_logger("tscv")

ENSEMBLE = "ensemble"
ENSEMBLE_STREAM = zlib.crc32(ENSEMBLE.encode("utf-8"))
DEFAULT_SAMPLES = 1000

RuleResults = Dict[str, Dict[Tuple[str, int], OutbreakRuleResult]]


@dataclass(frozen=True)
class TscvPlan:
    """
    Forecast origins, one per month. Each origin is the last month of its training
    window; forecasts target origin + h for every horizon h. A cross-validation plan
    must end before its holdout boundary, an evaluation plan must start after it.
    """
    initial_training_end: pd.Period
    origins: Tuple[pd.Period, ...]
    horizons: Tuple[int, ...] = HORIZONS
    phase: str = "cv"
    boundary: Optional[pd.Period] = None

    def __post_init__(self):
        object.__setattr__(self, "initial_training_end", pd.Period(self.initial_training_end, freq="M"))
        object.__setattr__(self, "origins", tuple(pd.Period(o, freq="M") for o in self.origins))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if self.boundary is not None:
            object.__setattr__(self, "boundary", pd.Period(self.boundary, freq="M"))
        if self.phase not in ("cv", "evaluation"):
            raise PlanValidationError(f"Unknown plan phase: {self.phase}")
        if not self.origins:
            raise PlanValidationError("A plan needs at least one origin")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise PlanValidationError("Plan horizons must be positive")
        steps = [(b - a).n for a, b in zip(self.origins, self.origins[1:])]
        if any(s != 1 for s in steps):
            raise PlanValidationError("Origins must advance one month at a time")
        if self.origins[0] < self.initial_training_end:
            raise PlanValidationError(
                f"First origin {self.origins[0]} precedes the initial training end {self.initial_training_end}"
            )
        if self.boundary is not None:
            if self.phase == "cv" and self.origins[-1] >= self.boundary:
                raise PlanValidationError(
                    f"Cross-validation origins run into the evaluation window starting {self.boundary}"
                )
            if self.phase == "evaluation" and self.origins[0] < self.boundary:
                raise PlanValidationError(
                    f"Evaluation origins start before the evaluation window {self.boundary}"
                )

    @classmethod
    def monthly(cls, initial_training_end, first, last, horizons=HORIZONS, phase: str = "cv",
                boundary=None) -> "TscvPlan":
        first, last = pd.Period(first, freq="M"), pd.Period(last, freq="M")
        if last < first:
            raise PlanValidationError(f"Plan ends ({last}) before it starts ({first})")
        origins = tuple(pd.period_range(first, last, freq="M"))
        return cls(pd.Period(initial_training_end, freq="M"), origins, tuple(horizons), phase, boundary)

    @property
    def first(self) -> pd.Period:
        return self.origins[0]

    @property
    def last(self) -> pd.Period:
        return self.origins[-1]

    def origin_indices(self, panel: PanelDataset) -> List[int]:
        idx = [panel.index_of(o) for o in self.origins]
        if idx[0] < 0 or idx[-1] >= panel.n_months:
            raise PlanValidationError(
                f"Plan origins {self.first}..{self.last} fall outside the panel {panel.months[0]}..{panel.months[-1]}"
            )
        return idx

    def check_disjoint(self, other: "TscvPlan"):
        """Origin windows of two plans must not overlap"""
        if self.first <= other.last and other.first <= self.last:
            raise PlanValidationError(
                f"{self.phase} window {self.first}..{self.last} overlaps "
                f"{other.phase} window {other.first}..{other.last}"
            )

    def to_dict(self) -> dict:
        return {
            "initial_training_end": str(self.initial_training_end),
            "origins": [str(o) for o in self.origins],
            "horizons": list(self.horizons),
            "phase": self.phase,
            "boundary": None if self.boundary is None else str(self.boundary),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TscvPlan":
        return cls(data["initial_training_end"], tuple(data["origins"]), tuple(data["horizons"]),
                   data.get("phase", "cv"), data.get("boundary"))


def split_plans(initial_training_end, cv_start, cv_end, eval_start, eval_end,
                horizons=HORIZONS) -> Tuple[TscvPlan, TscvPlan]:
    """Cross-validation and evaluation plans sharing one holdout boundary"""
    eval_start = pd.Period(eval_start, freq="M")
    if eval_start <= pd.Period(cv_end, freq="M"):
        raise PlanValidationError(f"Evaluation window starting {eval_start} overlaps cross-validation ending {cv_end}")
    cv = TscvPlan.monthly(initial_training_end, cv_start, cv_end, horizons, "cv", eval_start)
    evaluation = TscvPlan.monthly(initial_training_end, eval_start, eval_end, horizons, "evaluation", eval_start)
    cv.check_disjoint(evaluation)
    return cv, evaluation


@dataclass
class LeakageAudit:
    """Newest month each (model, origin, horizon) fit and forecast recorded reading, against its origin"""
    checked: int = 0
    violations: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def check(self, model: str, origin: pd.Period, horizon: int, origin_t: int, consumed_t: int):
        self.checked += 1
        if consumed_t > origin_t:
            self.violations.append({"model": model, "origin": str(origin), "horizon": horizon,
                                    "consumed_after_origin": consumed_t - origin_t})

    def merge(self, other: "LeakageAudit") -> "LeakageAudit":
        return LeakageAudit(self.checked + other.checked, self.violations + other.violations)

    def to_dict(self) -> dict:
        return {"checked": self.checked, "violations": self.violations, "passed": self.passed}


@dataclass
class UnitResult:
    """One model fitted at one origin: (horizons, districts, samples) draws or a failure"""
    model: str
    origin_t: int
    samples: Optional[np.ndarray]
    failure: Optional[str] = None
    diagnostics: dict = field(default_factory=dict)
    consumed: Dict[int, int] = field(default_factory=dict)


@dataclass
class TscvResult:
    """Scores, forecast cubes, failed fits and the leakage audit of a run"""
    plan: TscvPlan
    scores: ScoreTable
    cubes: Dict[str, ForecastCube]
    failures: List[dict] = field(default_factory=list)
    audit: LeakageAudit = field(default_factory=LeakageAudit)
    weights: Optional[EnsembleWeights] = None


def _run_unit(spec: ModelSpec, panel: PanelDataset, origin_t: int, horizons: Sequence[int],
              n_samples: int, seed: int) -> UnitResult:
    """
    Fit on months 0..origin and forecast every horizon. consumed maps each horizon to
    the newest panel month the fit and that forecast recorded reading.
    """
    model = model_for(spec.family)
    visible = panel.head(origin_t + 1)
    origin = str(panel.month_at(origin_t))
    consumed: Dict[int, int] = {}
    try:
        fitted = model.fit(spec, visible, origin_t, jobs=1)
        draws = np.empty((len(horizons), panel.n_districts, n_samples), dtype=np.int64)
        for j, h in enumerate(horizons):
            forecasts = model.forecast(fitted, visible, origin_t, h, n_samples,
                                       forecast_rng(seed, spec, origin_t, h))
            consumed[h] = newest_read(fitted, forecasts)
            for d, district in enumerate(panel.districts):
                draws[j, d] = forecasts[district].samples
    except SpecError:
        raise
    except DengueCastError as e:
        log_fit_event(logger, spec.name, origin, "failed", {"error": str(e)})
        return UnitResult(spec.name, origin_t, None, f"{type(e).__name__}: {e}", consumed=consumed)
    return UnitResult(spec.name, origin_t, draws, diagnostics=fitted.diagnostics.to_dict(), consumed=consumed)


def rule_results(panel: PanelDataset, rules: Sequence[OutbreakRule], targets: Sequence[int],
                 seed: int = 0, jobs: int = 1) -> RuleResults:
    """Threshold and label of each rule at each observed target month, keyed (district, t)"""
    targets = sorted({int(t) for t in targets if 0 <= t < panel.n_months})
    out: RuleResults = {}
    if not targets:
        return out
    for rule in rules:
        frame = label_panel(panel, rule, targets, seed=seed, jobs=jobs)
        t_index = [panel.index_of(pd.Period(year=y, month=m, freq="M")) for y, m in zip(frame["year"], frame["month"])]
        out[rule.name] = {
            (d, t): OutbreakRuleResult(float(thr), Label(label), int(size))
            for d, t, thr, label, size in zip(frame["district"], t_index, frame["threshold"],
                                             frame["label"], frame["history_size"])
        }
    return out


def score_cube(cube: ForecastCube, panel: PanelDataset, rules: Optional[RuleResults] = None) -> ScoreTable:
    """Score every available forecast whose target month is observed"""
    rows = []
    rules = rules or {}
    for k, origin in enumerate(cube.origins):
        origin_t = panel.index_of(origin)
        for j, h in enumerate(cube.horizons):
            t = origin_t + h
            if t >= panel.n_months or not cube.available(k, j):
                continue
            for d, district in enumerate(cube.districts):
                forecast = cube.distribution(k, j, d)
                i = panel.district_index(district)
                by_rule = {name: res[(district, t)] for name, res in rules.items() if (district, t) in res}
                rows.extend(score_forecast(cube.model, forecast, float(panel.cases[i, t]), by_rule))
    return ScoreTable.from_rows(rows)


def _plan_targets(panel: PanelDataset, plan: TscvPlan) -> List[int]:
    return [t + h for t in plan.origin_indices(panel) for h in plan.horizons]


def run_components(panel: PanelDataset, specs: Sequence[ModelSpec], plan: TscvPlan, seed: int,
                   n_samples: int = DEFAULT_SAMPLES, rules: Sequence[OutbreakRule] = (),
                   jobs: int = -1) -> TscvResult:
    """Fit, forecast and score every spec at every origin of the plan"""
    names = [s.name for s in specs]
    if len(set(names)) != len(names) or ENSEMBLE in names:
        raise SpecError(f"Model names must be unique and not '{ENSEMBLE}': {names}")
    for spec in specs:
        spec.check_panel(panel)
        if max(plan.horizons) > spec.max_horizon:
            raise SpecError(f"{spec.name} supports horizons up to {spec.max_horizon}")
    origin_idx = plan.origin_indices(panel)

    units = Parallel(n_jobs=jobs)(
        delayed(_run_unit)(spec, panel, t, plan.horizons, n_samples, seed)
        for spec in specs for t in origin_idx
    )

    audit = LeakageAudit()
    failures: List[dict] = []
    cubes = {s.name: ForecastCube.empty(s.name, plan.origins, plan.horizons, panel.districts, n_samples)
             for s in specs}
    for unit in units:
        k = origin_idx.index(unit.origin_t)
        origin = plan.origins[k]
        for h, consumed_t in unit.consumed.items():
            audit.check(unit.model, origin, h, unit.origin_t, consumed_t)
        if unit.samples is None:
            failures.append({"model": unit.model, "origin": str(origin), "error": unit.failure})
            continue
        cubes[unit.model].samples[k] = unit.samples

    results = rule_results(panel, rules, _plan_targets(panel, plan), seed=seed, jobs=jobs)
    scores = ScoreTable.concat([score_cube(cubes[s.name], panel, results) for s in specs])

    if not audit.passed:
        logger.error(f"Leakage audit found {len(audit.violations)} forecasts reading past their origin")
    log_run_event(logger, "", "components_done", {
        "phase": plan.phase, "models": names, "origins": len(origin_idx),
        "failed_fits": len(failures), "audit_checked": audit.checked, "audit_passed": audit.passed,
    })
    return TscvResult(plan, scores, cubes, failures, audit)


def pool_cubes(cubes: Dict[str, ForecastCube], weights: EnsembleWeights, seed: int,
               n_total: int = N_POOLED, per_horizon: bool = False) -> ForecastCube:
    """
    Ensemble cube: for each origin and horizon, pool the components that produced
    forecasts, with weights renormalized over them.
    """
    members = [m for m in weights.models if m in cubes]
    if not members:
        raise SpecError(f"None of the weighted models {weights.models} has forecasts")
    first = cubes[members[0]]
    pooled = ForecastCube.empty(ENSEMBLE, first.origins, first.horizons, first.districts, n_total)
    for k, origin in enumerate(first.origins):
        for j, h in enumerate(first.horizons):
            available = [m for m in members if cubes[m].available(k, j)]
            if not available:
                logger.warning(f"No component forecasts at {origin} horizon {h}; ensemble left empty")
                continue
            w = weights.for_models(available, h if per_horizon else None)
            for d in range(len(first.districts)):
                rng = np.random.default_rng(np.random.SeedSequence(
                    [int(seed), ENSEMBLE_STREAM, int(origin.ordinal), int(h), d]))
                dist = pool_samples({m: cubes[m].distribution(k, j, d) for m in available}, w, n_total, rng)
                pooled.samples[k, j, d] = dist.samples
    return pooled


def add_ensemble(result: TscvResult, panel: PanelDataset, weights: EnsembleWeights, seed: int,
                 n_total: int = N_POOLED, rules: Sequence[OutbreakRule] = (), per_horizon: bool = False,
                 jobs: int = 1) -> TscvResult:
    """The result with the pooled ensemble cube and its scores added"""
    cube = pool_cubes(result.cubes, weights, seed, n_total, per_horizon)
    results = rule_results(panel, rules, _plan_targets(panel, result.plan), seed=seed, jobs=jobs)
    scores = ScoreTable.concat([result.scores, score_cube(cube, panel, results)])
    return TscvResult(result.plan, scores, {**result.cubes, ENSEMBLE: cube}, result.failures,
                      result.audit, weights)


def run_tscv(panel: PanelDataset, specs: Sequence[ModelSpec], plan: TscvPlan, seed: int,
             n_samples: int = DEFAULT_SAMPLES, rules: Sequence[OutbreakRule] = (),
             jobs: int = -1) -> TscvResult:
    """Rolling-origin cross-validation of the component models"""
    if plan.phase != "cv":
        raise PlanValidationError(f"run_tscv needs a cross-validation plan, got {plan.phase}")
    logger.info(f"Cross-validation: {len(specs)} models x {len(plan.origins)} origins ({plan.first}..{plan.last})")
    return run_components(panel, specs, plan, seed, n_samples, rules, jobs)


def run_evaluation(panel: PanelDataset, specs: Sequence[ModelSpec], weights: EnsembleWeights,
                   plan: TscvPlan, seed: int, n_samples: int = DEFAULT_SAMPLES,
                   n_total: int = N_POOLED, rules: Sequence[OutbreakRule] = (),
                   cv_plan: Optional[TscvPlan] = None, per_horizon: bool = False,
                   jobs: int = -1) -> TscvResult:
    """
    Out-of-sample evaluation with weights frozen from cross-validation. Components are
    refit at every origin exactly as in cross-validation; the weights are only applied.
    """
    if not weights.frozen:
        raise WeightsFrozenError("Evaluation needs the weights frozen at the end of cross-validation")
    if plan.phase != "evaluation":
        raise PlanValidationError(f"run_evaluation needs an evaluation plan, got {plan.phase}")
    if cv_plan is not None:
        plan.check_disjoint(cv_plan)
    missing = [m for m in weights.models if m not in {s.name for s in specs}]
    if missing:
        raise SpecError(f"Weighted models without a spec: {', '.join(missing)}")
    logger.info(f"Evaluation: {len(specs)} models x {len(plan.origins)} origins ({plan.first}..{plan.last})")
    result = run_components(panel, specs, plan, seed, n_samples, rules, jobs)
    return add_ensemble(result, panel, weights, seed, n_total, rules, per_horizon, jobs)
