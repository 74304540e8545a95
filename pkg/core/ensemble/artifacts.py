"""
Run artifacts
Forecast cubes, plan, weights and manifest files of a run directory
"""

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import metadata
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import BadInputError, MissingArtifactError
from core.models.base import ForecastDistribution
from utils.logger import setup_logger, log_run_event

logger = setup_logger("artifacts")

MISSING = -1
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "statsmodels", "scikit-learn", "properscoring")
FORECAST_COLUMNS = ["district", "origin_year", "origin_month", "horizon", "sample_index", "value"]


@dataclass
class ForecastCube:
    """
    Samples of one model laid out [origin, horizon, district, sample] as int64.
    Forecast units a model could not produce hold -1.
    """
    model: str
    origins: pd.PeriodIndex
    horizons: tuple
    districts: tuple
    samples: np.ndarray

    def __post_init__(self):
        self.origins = pd.PeriodIndex(self.origins, freq="M")
        self.horizons = tuple(int(h) for h in self.horizons)
        self.districts = tuple(self.districts)
        self.samples = np.asarray(self.samples, dtype=np.int64)
        expected = (len(self.origins), len(self.horizons), len(self.districts))
        if self.samples.ndim != 4 or self.samples.shape[:3] != expected:
            raise BadInputError(f"Forecast cube for {self.model} has shape {self.samples.shape}, expected {expected} x samples")

    @classmethod
    def empty(cls, model: str, origins, horizons, districts, n_samples: int) -> "ForecastCube":
        shape = (len(origins), len(horizons), len(districts), n_samples)
        return cls(model, origins, horizons, districts, np.full(shape, MISSING, dtype=np.int64))

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[-1])

    def available(self, k: int, j: int) -> bool:
        """Whether origin k, horizon j holds forecasts"""
        return bool(np.all(self.samples[k, j] >= 0))

    def distribution(self, k: int, j: int, d: int) -> Optional[ForecastDistribution]:
        values = self.samples[k, j, d]
        if np.any(values < 0):
            return None
        return ForecastDistribution(self.districts[d], self.origins[k], self.horizons[j], values)

    def to_frame(self) -> pd.DataFrame:
        """Long table of every available sample"""
        k, j, d, s = np.indices(self.samples.shape).reshape(4, -1)
        values = self.samples.reshape(-1)
        keep = values >= 0
        origins = self.origins[k[keep]]
        return pd.DataFrame({
            "district": np.asarray(self.districts)[d[keep]],
            "origin_year": origins.year,
            "origin_month": origins.month,
            "horizon": np.asarray(self.horizons)[j[keep]],
            "sample_index": s[keep],
            "value": values[keep],
        })[FORECAST_COLUMNS]

    def sidecar(self) -> dict:
        return {
            "model": self.model,
            "dims": ["origin", "horizon", "district", "sample"],
            "shape": list(self.samples.shape),
            "dtype": "<i8",
            "missing_value": MISSING,
            "origins": [str(o) for o in self.origins],
            "horizons": list(self.horizons),
            "districts": list(self.districts),
        }

    def save(self, forecasts_dir: str) -> str:
        os.makedirs(forecasts_dir, exist_ok=True)
        path = os.path.join(forecasts_dir, f"{self.model}.npy")
        np.save(path, self.samples.astype("<i8"), allow_pickle=False)
        with open(os.path.join(forecasts_dir, f"{self.model}.json"), "w") as f:
            json.dump(self.sidecar(), f, indent=2)
        return path

    @classmethod
    def load(cls, forecasts_dir: str, model: str) -> "ForecastCube":
        path = os.path.join(forecasts_dir, f"{model}.npy")
        meta_path = os.path.join(forecasts_dir, f"{model}.json")
        if not os.path.exists(path) or not os.path.exists(meta_path):
            raise MissingArtifactError(f"Missing forecasts for {model} in {forecasts_dir}")
        with open(meta_path) as f:
            meta = json.load(f)
        samples = np.load(path, allow_pickle=False)
        return cls(model, pd.PeriodIndex(meta["origins"], freq="M"), meta["horizons"],
                   meta["districts"], samples)


def saved_models(forecasts_dir: str) -> List[str]:
    if not os.path.isdir(forecasts_dir):
        raise MissingArtifactError(f"Missing forecasts directory: {forecasts_dir}")
    return sorted(f[:-4] for f in os.listdir(forecasts_dir) if f.endswith(".npy"))


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_sha256(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def package_versions(names: Iterable[str] = VERSIONED_PACKAGES) -> Dict[str, Optional[str]]:
    versions = {}
    for name in names:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_json(path: str, data: dict) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=str)
    return path


def read_json(path: str, what: str) -> dict:
    if not os.path.exists(path):
        raise MissingArtifactError(f"Missing {what}: {path}")
    with open(path) as f:
        return json.load(f)


class RunDirectory:
    """Layout of a run: forecasts/, scores/, weights.json, plan.json, manifest.json"""

    def __init__(self, root: str):
        self.root = root

    @property
    def forecasts(self) -> str:
        return os.path.join(self.root, "forecasts")

    @property
    def scores(self) -> str:
        return os.path.join(self.root, "scores")

    @property
    def weights(self) -> str:
        return os.path.join(self.root, "weights.json")

    @property
    def plan(self) -> str:
        return os.path.join(self.root, "plan.json")

    @property
    def manifest(self) -> str:
        return os.path.join(self.root, "manifest.json")

    @property
    def reports(self) -> str:
        return os.path.join(self.root, "reports")

    def write_cubes(self, cubes: Sequence[ForecastCube]) -> List[str]:
        return [cube.save(self.forecasts) for cube in cubes]

    def read_cube(self, model: str) -> ForecastCube:
        return ForecastCube.load(self.forecasts, model)

    def models(self) -> List[str]:
        return saved_models(self.forecasts)

    def write_manifest(self, seed: int, config: dict, inputs: Sequence[str],
                       audit: Optional[dict] = None, failures: Optional[list] = None,
                       extra: Optional[dict] = None) -> str:
        manifest = {
            "seed": int(seed),
            "versions": package_versions(),
            "config_sha256": config_sha256(config),
            "inputs": {p: file_sha256(p) for p in inputs if p and os.path.exists(p)},
            "leakage_audit": audit or {},
            "failed_fits": failures or [],
            **(extra or {}),
        }
        path = write_json(self.manifest, manifest)
        log_run_event(logger, self.root, "manifest_written",
                      {"seed": int(seed), "failed_fits": len(manifest["failed_fits"])})
        return path

    def read_manifest(self) -> dict:
        return read_json(self.manifest, "run manifest")
