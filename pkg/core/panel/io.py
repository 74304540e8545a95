"""
Panel file formats
Long-format case CSVs, covariate CSVs and adjacency edge lists
"""

import os
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import BadInputError
from core.panel.dataset import AdjacencyGraph, PanelDataset, require_valid
from utils.logger import setup_logger

logger = setup_logger("panel_io")

PANEL_COLUMNS = ["district", "year", "month", "cases", "population"]


def _read_csv(path: str, required: Sequence[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise BadInputError(f"File not found: {path}")
    try:
        df = pd.read_csv(path, dtype={"district": str}, encoding="utf-8")
    except Exception as e:
        logger.error(f"Failed to read {path}: {str(e)}")
        raise BadInputError(f"Unreadable CSV {path}: {e}")
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise BadInputError(f"{path} is missing columns: {', '.join(missing)}")
    if not df["month"].between(1, 12).all():
        raise BadInputError(f"{path} has months outside 1..12")
    return df


def _periods(df: pd.DataFrame) -> pd.PeriodIndex:
    return pd.PeriodIndex.from_fields(year=df["year"].to_numpy(), month=df["month"].to_numpy(), freq="M")


def _pivot(df: pd.DataFrame, column: str, districts: Sequence[str],
           months: pd.PeriodIndex) -> np.ndarray:
    frame = df.assign(period=_periods(df))
    if frame.duplicated(["district", "period"]).any():
        raise BadInputError(f"Duplicate district-month rows for {column}")
    wide = frame.pivot(index="district", columns="period", values=column)
    wide = wide.reindex(index=list(districts), columns=months)
    return wide.to_numpy(dtype=float)


def read_adjacency(path: str, districts: Optional[Sequence[str]] = None) -> AdjacencyGraph:
    """Edge list `district_a,district_b`, one undirected edge per line"""
    if not os.path.exists(path):
        raise BadInputError(f"File not found: {path}")
    edges: List[Tuple[str, str]] = []
    nodes: List[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise BadInputError(f"{path}:{lineno}: expected 'district_a,district_b'")
            if parts == ["district_a", "district_b"]:
                continue
            edges.append((parts[0], parts[1]))
            nodes.extend(parts)
    ordered = list(districts) if districts is not None else list(dict.fromkeys(nodes))
    extra = [d for d in dict.fromkeys(nodes) if d not in ordered]
    return AdjacencyGraph(ordered + extra, edges)


def read_covariate(path: str, districts: Sequence[str], months: pd.PeriodIndex) -> Dict[str, np.ndarray]:
    """Covariate CSV `district,year,month,<name>[,<name>...]` aligned to the panel axes"""
    df = _read_csv(path, ["district", "year", "month"])
    names = [c for c in df.columns if c not in ("district", "year", "month")]
    if not names:
        raise BadInputError(f"{path} holds no covariate column")
    return {name: _pivot(df, name, districts, months) for name in names}


def read_panel(panel_path: str, adjacency_path: str,
               covariate_paths: Optional[Iterable[str]] = None,
               units: Optional[Dict[str, str]] = None,
               validate: bool = True) -> PanelDataset:
    """Load a panel from its CSV files and check every invariant"""
    df = _read_csv(panel_path, PANEL_COLUMNS)
    districts = tuple(dict.fromkeys(df["district"]))
    periods = _periods(df)
    months = pd.period_range(periods.min(), periods.max(), freq="M")

    cases = _pivot(df, "cases", districts, months)
    population = _pivot(df, "population", districts, months)
    if np.isnan(cases).any() or np.isnan(population).any():
        raise BadInputError(f"{panel_path} does not cover every district-month")

    covariates: Dict[str, np.ndarray] = {}
    for path in covariate_paths or []:
        for name, values in read_covariate(path, districts, months).items():
            if name in covariates:
                raise BadInputError(f"Covariate {name} defined twice")
            covariates[name] = values

    cases_int = cases.astype(np.int64) if np.all(cases == np.round(cases)) else cases
    panel = PanelDataset(
        districts=districts,
        months=months,
        cases=cases_int,
        population=population,
        adjacency=read_adjacency(adjacency_path, districts),
        covariates=covariates,
        covariate_units=dict(units or {}),
    )
    logger.info(f"Loaded panel {panel_path}: {panel.n_districts} districts x {panel.n_months} months, "
                f"covariates {sorted(covariates)}")
    return require_valid(panel) if validate else panel


def panel_frame(panel: PanelDataset) -> pd.DataFrame:
    """Long-format frame in the case panel file layout"""
    idx = pd.MultiIndex.from_product([panel.districts, range(panel.n_months)], names=["district", "t"])
    frame = idx.to_frame(index=False)
    frame["year"] = panel.year_index[frame["t"]]
    frame["month"] = panel.month_of_year[frame["t"]]
    frame["cases"] = panel.cases.reshape(-1)
    frame["population"] = panel.population.reshape(-1)
    for name, values in panel.covariates.items():
        frame[name] = values.reshape(-1)
    return frame.drop(columns="t")


def write_panel(panel: PanelDataset, panel_path: str, adjacency_path: str) -> None:
    frame = panel_frame(panel)
    os.makedirs(os.path.dirname(os.path.abspath(panel_path)), exist_ok=True)
    out = frame[PANEL_COLUMNS].copy()
    out["population"] = out["population"].round().astype(np.int64)
    out.to_csv(panel_path, index=False)
    write_adjacency(panel.adjacency, adjacency_path)


def write_adjacency(adjacency: AdjacencyGraph, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("district_a,district_b\n")
        for a, b in adjacency.edges:
            f.write(f"{a},{b}\n")


def write_covariate(frame: pd.DataFrame, name: str, path: str) -> None:
    """Write a `district,year,month,<name>` covariate file"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame[["district", "year", "month", name]].to_csv(path, index=False)
