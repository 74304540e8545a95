"""
Ensemble weights
Inverse squared CRPS weighting and the freeze rule for out-of-sample evaluation
"""

from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import BadInputError, WeightsFrozenError
from core.scoring.table import ScoreTable
from utils.logger import setup_logger

logger = setup_logger("ensemble_weights")

SUM_TOL = 1e-12


def inverse_crps_weights(crps: Mapping[str, float]) -> Dict[str, float]:
    """
    (1 / CRPS_m^2) / sum(1 / CRPS^2). A model with zero CRPS takes all the weight
    (split evenly if several do).
    """
    if not crps:
        raise BadInputError("Weights need at least one model")
    values = np.array([float(v) for v in crps.values()])
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise BadInputError(f"CRPS values must be finite and non-negative: {dict(crps)}")
    zero = values == 0
    if zero.any():
        raw = zero.astype(float)
    else:
        raw = 1.0 / values ** 2
    w = raw / raw.sum()
    # push the rounding residue onto the largest weight
    w[np.argmax(w)] += 1.0 - w.sum()
    return dict(zip(crps.keys(), w.tolist()))


class EnsembleWeights(BaseModel):
    """One weight per model, summing to one"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    weights: Dict[str, float]
    crps: Dict[str, float] = Field(default_factory=dict)
    by_horizon: Dict[int, Dict[str, float]] = Field(default_factory=dict)
    degenerate: bool = False
    frozen: bool = False

    @model_validator(mode="after")
    def _check(self):
        for name, w in [("global", self.weights), *[(f"horizon {h}", v) for h, v in self.by_horizon.items()]]:
            if not w:
                raise BadInputError(f"Empty {name} weight vector")
            values = np.array(list(w.values()))
            if np.any(values < 0) or np.any(values > 1):
                raise BadInputError(f"{name} weights must lie in [0, 1]")
            if abs(values.sum() - 1.0) > SUM_TOL:
                raise BadInputError(f"{name} weights sum to {values.sum()!r}, not 1")
        return self

    @property
    def models(self) -> list:
        return list(self.weights)

    def for_horizon(self, horizon: Optional[int] = None) -> Dict[str, float]:
        if horizon is not None and horizon in self.by_horizon:
            return dict(self.by_horizon[horizon])
        return dict(self.weights)

    def for_models(self, available: Sequence[str], horizon: Optional[int] = None) -> Dict[str, float]:
        """Weights renormalized over the available components"""
        base = self.for_horizon(horizon)
        kept = {m: w for m, w in base.items() if m in set(available)}
        total = sum(kept.values())
        if not kept or total <= 0:
            raise BadInputError(f"No weighted component among {list(available)}")
        if len(kept) < len(base):
            missing = sorted(set(base) - set(kept))
            logger.warning(f"Renormalizing ensemble without {', '.join(missing)}")
        out = {m: w / total for m, w in kept.items()}
        top = max(out, key=out.get)
        out[top] += 1.0 - sum(out.values())
        return out

    def freeze(self) -> "EnsembleWeights":
        return self.model_copy(update={"frozen": True})

    def recompute(self, crps: Mapping[str, float]) -> "EnsembleWeights":
        if self.frozen:
            raise WeightsFrozenError("Ensemble weights are frozen; they may not be recomputed")
        return compute_weights(crps)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleWeights":
        return cls.model_validate_json(text)


def compute_weights(crps: Mapping[str, float],
                    by_horizon: Optional[Mapping[int, Mapping[str, float]]] = None) -> EnsembleWeights:
    """Weights from mean cross-validation CRPS per model (and optionally per horizon)"""
    degenerate = any(float(v) == 0 for v in crps.values())
    if degenerate:
        logger.warning(f"Zero CRPS among {list(crps)}; degenerate ensemble weights")
    weights = EnsembleWeights(
        weights=inverse_crps_weights(crps),
        crps={k: float(v) for k, v in crps.items()},
        by_horizon={int(h): inverse_crps_weights(v) for h, v in (by_horizon or {}).items()},
        degenerate=degenerate,
    )
    logger.info(f"Ensemble weights: {', '.join(f'{k}={v:.3f}' for k, v in weights.weights.items())}")
    return weights


def weights_from_scores(table: ScoreTable, models: Sequence[str],
                        per_horizon: bool = False) -> EnsembleWeights:
    """Weights from the CRPS rows of a cross-validation score table"""
    crps_rows = table.select(metric="crps").frame
    crps: Dict[str, float] = {}
    for model in models:
        values = crps_rows.loc[crps_rows["model"] == model, "value"]
        if values.empty:
            raise BadInputError(f"No cross-validation CRPS for {model}")
        crps[model] = float(values.mean())
    by_horizon = None
    if per_horizon:
        by_horizon = {}
        for h, group in crps_rows[crps_rows["model"].isin(models)].groupby("horizon"):
            means = group.groupby("model")["value"].mean()
            by_horizon[int(h)] = {m: float(means[m]) for m in models if m in means.index}
    return compute_weights(crps, by_horizon)
