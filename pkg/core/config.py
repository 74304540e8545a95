"""
Run configuration
TOML file, .env and DENGUECAST_ environment overrides resolved into one validated config
"""

import os
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict, TomlConfigSettingsSource

from core.errors import BadInputError
from core.models.base import HORIZONS
from utils.logger import setup_logger

logger = setup_logger("config")

ENV_PREFIX = "DENGUECAST_"


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    panel: Optional[str] = None
    adjacency: Optional[str] = None
    covariates: Dict[str, str] = Field(default_factory=dict)
    stations: Optional[str] = None
    grids: Dict[str, str] = Field(default_factory=dict)
    centroids: Optional[str] = None
    weights: Optional[str] = None

    def relative_to(self, base: str) -> "PathsConfig":
        """Copy with relative paths anchored at base"""
        def anchor(p: Optional[str]) -> Optional[str]:
            return p if p is None or os.path.isabs(p) else os.path.join(base, p)

        return PathsConfig(
            panel=anchor(self.panel), adjacency=anchor(self.adjacency),
            covariates={k: anchor(v) for k, v in self.covariates.items()},
            stations=anchor(self.stations), grids={k: anchor(v) for k, v in self.grids.items()},
            centroids=anchor(self.centroids), weights=anchor(self.weights),
        )


class PlanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial_training_end: str = "2011-12"
    cv_start: str = "2011-12"
    cv_end: str = "2016-11"
    eval_start: str = "2016-12"
    eval_end: str = "2022-09"
    horizons: Tuple[int, ...] = HORIZONS

    @field_validator("initial_training_end", "cv_start", "cv_end", "eval_start", "eval_end")
    @classmethod
    def _month(cls, value: str) -> str:
        try:
            return str(pd.Period(value, freq="M"))
        except (ValueError, TypeError):
            raise ValueError(f"not a month: {value!r}")


class ModelsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    presets: List[str] = Field(default_factory=lambda: ["reference", "st1", "st2", "st3", "hhh4", "pca"])
    members: List[str] = Field(default_factory=lambda: ["st1", "st2", "st3", "hhh4", "pca"])
    n_samples: int = Field(1000, ge=1000)
    n_pooled: int = Field(10000, ge=1)
    per_horizon_weights: bool = False
    overrides: Dict[str, Dict] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _members_fitted(self):
        extra = [m for m in self.members if m not in self.presets]
        if extra:
            raise ValueError(f"ensemble members not among presets: {extra}")
        return self


class ThresholdConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rules: List[str] = Field(default_factory=lambda: ["mean_plus_2sd", "percentile_95", "poisson_glm", "fixed_rate"])
    fixed_rate_levels: List[int] = Field(default_factory=lambda: [50, 100, 150, 300])
    n_sims: int = Field(10000, ge=1)
    probability_cutoff: float = Field(0.5, ge=0.0, le=1.0)
    detect_horizon: int = Field(3, ge=1)
    retrospective_percentile: bool = False


class WeatherConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["station", "grid"] = "station"
    variables: List[str] = Field(default_factory=lambda: ["tmin", "rain"])
    nlags: int = Field(10, ge=2)
    missing_fraction: float = Field(0.2, ge=0.0, le=1.0)


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_districts: int = Field(5, ge=1)
    n_months: int = Field(48, ge=40)
    start: str = "2004-01"
    n_stations: int = Field(8, ge=4)
    grid_size: int = Field(6, ge=2)


class RunConfig(BaseSettings):
    """Everything a command needs; seed is mandatory"""
    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="forbid",
    )

    seed: int = Field(ge=0, lt=2 ** 64)
    out_dir: str = "runs/default"
    jobs: int = -1
    paths: PathsConfig = Field(default_factory=PathsConfig)
    plan: PlanConfig = Field(default_factory=PlanConfig)
    models: ModelsConfig = Field(default_factory=ModelsConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    weather: WeatherConfig = Field(default_factory=WeatherConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return init_settings, env_settings, dotenv_settings, TomlConfigSettingsSource(settings_cls)

    @classmethod
    def load(cls, path: Optional[str] = None, **overrides) -> "RunConfig":
        """
        Config from a TOML file with environment and .env overrides; keyword
        overrides (command-line flags) win over everything.
        """
        if path is not None and not os.path.exists(path):
            raise BadInputError(f"Config file not found: {path}")
        overrides = {k: v for k, v in overrides.items() if v is not None}

        class FileConfig(cls):
            model_config = SettingsConfigDict(**{**cls.model_config, "toml_file": path})

        try:
            config = FileConfig(**overrides)
        except ValidationError as e:
            first = e.errors()[0]
            where = ".".join(str(p) for p in first["loc"]) or "config"
            logger.error(f"Invalid config {path}: {where}: {first['msg']}")
            raise BadInputError(f"Invalid config {where}: {first['msg']}")
        if path is not None:
            config = config.model_copy(update={"paths": config.paths.relative_to(os.path.dirname(path))})
        logger.info(f"Loaded config {path or '(defaults)'} with seed {config.seed}")
        return config

    def check_paths(self, required: Sequence[str]) -> None:
        """Raise naming the first required path that is unset or absent"""
        for name in required:
            value = getattr(self.paths, name)
            paths = list(value.values()) if isinstance(value, dict) else [value]
            if not paths or any(p is None for p in paths):
                raise BadInputError(f"Config path '{name}' is not set")
            for p in paths:
                if not os.path.exists(p):
                    raise BadInputError(f"Missing {name} file: {p}")

    def canonical(self) -> dict:
        """JSON-ready dump used for the manifest config hash"""
        return self.model_dump(mode="json")
