"""
Weather Files Integration
Readers and writers for station CSVs, gridded fields and district centroids
"""

import json
import os
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from core.errors import BadInputError
from core.weather.grid import GridField
from core.weather.stations import STATION_VARIABLES, StationSeries
from utils.logger import setup_logger

logger = setup_logger("weather_files")

STATION_COLUMNS = ["station", "x", "y", "date", *STATION_VARIABLES]
GRID_COLUMNS = ["date", "row", "col", "x", "y", "value"]
BINARY_FORMAT_VERSION = 1


def _require(path: str):
    if not os.path.exists(path):
        raise BadInputError(f"File not found: {path}")


def _read(path: str, columns: List[str]) -> pd.DataFrame:
    _require(path)
    try:
        df = pd.read_csv(path, encoding="utf-8", dtype={"station": str, "district": str})
    except Exception as e:
        logger.error(f"Failed to read {path}: {str(e)}")
        raise BadInputError(f"Unreadable CSV {path}: {e}")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise BadInputError(f"{path} is missing columns: {', '.join(missing)}")
    return df


def read_stations(path: str) -> List[StationSeries]:
    """
    Station CSV `station,x,y,date,tmin,tmax,tavg,rh,rain`.
    Records breaking the physical invariants are set to missing with a warning.
    """
    df = _read(path, STATION_COLUMNS)
    df["date"] = pd.to_datetime(df["date"])
    stations = []
    for station_id, rows in df.groupby("station", sort=True):
        locations = rows[["x", "y"]].drop_duplicates()
        if len(locations) != 1:
            raise BadInputError(f"Station {station_id} has more than one location")
        daily = rows.set_index("date")[list(STATION_VARIABLES)].sort_index()
        if daily.index.has_duplicates:
            raise BadInputError(f"Station {station_id} repeats dates")
        series = StationSeries(str(station_id), float(locations.iloc[0]["x"]),
                               float(locations.iloc[0]["y"]), daily)
        bad = int(series.violations().sum())
        if bad:
            logger.warning(f"Station {station_id}: {bad} records break physical invariants; masked")
            series = series.masked()
        stations.append(series)
    logger.info(f"Loaded {len(stations)} stations from {path}")
    return stations


def write_stations(stations: List[StationSeries], path: str) -> None:
    frames = []
    for s in stations:
        frame = s.daily.reset_index().rename(columns={"index": "date"})
        frame.insert(0, "station", s.station_id)
        frame.insert(1, "x", s.x)
        frame.insert(2, "y", s.y)
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True)
    out["date"] = pd.to_datetime(out["date"]).dt.strftime("%Y-%m-%d")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    out[STATION_COLUMNS].to_csv(path, index=False)


def read_grid_csv(path: str, variable: str) -> GridField:
    """Grid CSV `date,row,col,x,y,value` for one variable; must be complete per day"""
    df = _read(path, GRID_COLUMNS)
    df["date"] = pd.to_datetime(df["date"])
    rows, cols = int(df["row"].max()) + 1, int(df["col"].max()) + 1
    dates = pd.DatetimeIndex(sorted(df["date"].unique()))
    if len(df) != len(dates) * rows * cols or df.duplicated(["date", "row", "col"]).any():
        raise BadInputError(f"Grid {path} is not rectangular and complete for every day")

    cells = df[df["date"] == dates[0]].set_index(["row", "col"]).sort_index()
    x0, y0 = float(cells.loc[(0, 0), "x"]), float(cells.loc[(0, 0), "y"])
    if cols > 1:
        cell_size = float(cells.loc[(0, 1), "x"]) - x0
    elif rows > 1:
        cell_size = float(cells.loc[(1, 0), "y"]) - y0
    else:
        cell_size = 1.0

    values = np.empty((len(dates), rows, cols))
    day_index = {d: k for k, d in enumerate(dates)}
    values[df["date"].map(day_index).to_numpy(), df["row"].to_numpy(), df["col"].to_numpy()] = df["value"].to_numpy()
    return GridField(variable=variable, dates=dates, x0=x0, y0=y0, cell_size=cell_size, values=values)


def write_grid_csv(grid: GridField, path: str) -> None:
    cx, cy = grid.centres()
    days, rows, cols = grid.values.shape
    d, r, c = np.meshgrid(np.arange(days), np.arange(rows), np.arange(cols), indexing="ij")
    frame = pd.DataFrame({
        "date": grid.dates[d.ravel()].strftime("%Y-%m-%d"),
        "row": r.ravel(),
        "col": c.ravel(),
        "x": cx[r.ravel(), c.ravel()],
        "y": cy[r.ravel(), c.ravel()],
        "value": grid.values.ravel(),
    })
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)


def _sidecar(path: str) -> str:
    return os.path.splitext(path)[0] + ".json"


def read_grid_binary(path: str) -> GridField:
    """
    Dense grid: little-endian float64, row-major (days, rows, cols), with a JSON
    sidecar next to it giving variable, dims, origin, cell_size and start_date.
    """
    _require(path)
    _require(_sidecar(path))
    with open(_sidecar(path), encoding="utf-8") as f:
        meta = json.load(f)
    try:
        dims = tuple(int(v) for v in meta["dims"])
        raw = np.fromfile(path, dtype="<f8")
        values = raw.reshape(dims)
    except (KeyError, ValueError) as e:
        logger.error(f"Failed to read grid {path}: {str(e)}")
        raise BadInputError(f"Grid {path} does not match its sidecar: {e}")
    dates = pd.date_range(meta["start_date"], periods=dims[0], freq="D")
    return GridField(variable=meta["variable"], dates=dates, x0=float(meta["origin"][0]),
                     y0=float(meta["origin"][1]), cell_size=float(meta["cell_size"]), values=values)


def write_grid_binary(grid: GridField, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    grid.values.astype("<f8").tofile(path)
    meta = {
        "format_version": BINARY_FORMAT_VERSION,
        "variable": grid.variable,
        "dims": list(grid.values.shape),
        "order": "days,rows,cols",
        "dtype": "<f8",
        "origin": [grid.x0, grid.y0],
        "cell_size": grid.cell_size,
        "start_date": grid.dates[0].strftime("%Y-%m-%d"),
    }
    with open(_sidecar(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)


def read_grid(path: str, variable: str) -> GridField:
    """Either grid layout, chosen by extension"""
    if path.endswith(".csv"):
        return read_grid_csv(path, variable)
    return read_grid_binary(path)


def read_centroids(path: str) -> Dict[str, Tuple[float, float]]:
    """District centroids `district,x,y` in the same planar system as the weather data"""
    df = _read(path, ["district", "x", "y"])
    if df["district"].duplicated().any():
        raise BadInputError(f"{path} lists a district twice")
    return {str(r.district): (float(r.x), float(r.y)) for r in df.itertuples(index=False)}


def write_centroids(centroids: Dict[str, Tuple[float, float]], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.DataFrame(
        [(d, x, y) for d, (x, y) in centroids.items()], columns=["district", "x", "y"]
    ).to_csv(path, index=False)
