"""
Synthetic surveillance data
Seasonal district panels with planted outbreaks and a spatial hotspot, daily weather
fixtures (stations and grids), and simulators for every model family
"""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import BadInputError
from core.models.hhh4 import Hhh4Params, powerlaw_weights
from core.panel.dataset import AdjacencyGraph, PanelDataset
from core.panel.features import lag_covariate, standardize
from core.panel.io import write_covariate, write_panel
from core.weather.grid import GridField
from core.weather.stations import StationSeries
from integrations.weather_files import write_centroids, write_grid_csv, write_stations
from utils.logger import setup_logger

logger = setup_logger("synth")

SPACING = 10000.0
BASE_RATE = 20.0 / 100000.0
NB_SIZE = 10.0
WEATHER_EFFECTS = {"tmin": 0.25, "rain": 0.15}


@dataclass
class SyntheticData:
    """A panel plus the weather fixtures and truth it was generated from"""
    panel: PanelDataset
    centroids: Dict[str, Tuple[float, float]]
    stations: List[StationSeries] = field(default_factory=list)
    grids: Dict[str, GridField] = field(default_factory=dict)
    outbreaks: List[Tuple[str, int]] = field(default_factory=list)
    hotspot: Optional[str] = None


def district_names(n: int) -> List[str]:
    return [f"D{k + 1:02d}" for k in range(n)]


def grid_layout(n_districts: int) -> Tuple[Dict[str, Tuple[float, float]], List[Tuple[str, str]]]:
    """Districts on a near-square lattice with rook adjacency"""
    if n_districts < 1:
        raise BadInputError("Need at least one district")
    cols = int(np.ceil(np.sqrt(n_districts)))
    names = district_names(n_districts)
    cells = {d: divmod(k, cols) for k, d in enumerate(names)}
    centroids = {d: (SPACING * (c + 0.5), SPACING * (r + 0.5)) for d, (r, c) in cells.items()}
    position = {rc: d for d, rc in cells.items()}
    edges = []
    for d, (r, c) in cells.items():
        for nb in ((r, c + 1), (r + 1, c)):
            if nb in position:
                edges.append((d, position[nb]))
    return centroids, edges


def _days(months: pd.PeriodIndex) -> pd.DatetimeIndex:
    return pd.date_range(months[0].start_time, months[-1].end_time.normalize(), freq="D")


def weather_field(variable: str, days: pd.DatetimeIndex, x: np.ndarray, y: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Smooth daily field (days, points): seasonal cycle plus a west-east gradient"""
    doy = days.dayofyear.to_numpy()[:, None]
    x = np.asarray(x, dtype=float)[None, :]
    y = np.asarray(y, dtype=float)[None, :]
    if variable == "tmin":
        base = 23.0 + 2.0 * np.sin(2 * np.pi * (doy - 80) / 365.25) + 2e-5 * x - 1e-5 * y
        return base + rng.normal(0.0, 0.3, size=(len(days), 1))
    if variable == "rain":
        wet = np.clip(np.sin(2 * np.pi * (doy - 120) / 365.25), 0.0, None)
        mean = 1.0 + 9.0 * wet * (1.0 + 1e-5 * x)
        return mean * rng.gamma(2.0, 0.5, size=(len(days), 1))
    raise BadInputError(f"No synthetic field for {variable}")


def _monthly(daily: np.ndarray, days: pd.DatetimeIndex, variable: str) -> np.ndarray:
    """(points, months) monthly mean temperature or total rainfall"""
    frame = pd.DataFrame(daily, index=days)
    grouped = frame.groupby(days.to_period("M"))
    monthly = grouped.sum() if variable == "rain" else grouped.mean()
    return monthly.to_numpy().T


def _population(n: int, months: pd.PeriodIndex, rng: np.random.Generator) -> np.ndarray:
    """Step function over years, growing one percent a year"""
    base = rng.uniform(50000, 300000, size=n)
    years = np.asarray(months.year) - months[0].year
    return np.round(base[:, None] * 1.01 ** years[None, :])


def synthetic_panel(n_districts: int = 5, n_months: int = 48, start: str = "2004-01", seed: int = 0,
                    n_stations: int = 8, grid_size: int = 6, n_outbreaks: int = 3) -> SyntheticData:
    """
    Harmonic seasonal baseline with lagged weather effects, a hotspot district
    (and its neighbours), planted outbreak episodes and negative binomial noise.
    """
    if n_months < 24:
        raise BadInputError("Synthetic panels need at least 24 months")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7001]))
    months = pd.period_range(pd.Period(start, freq="M"), periods=n_months, freq="M")
    centroids, edges = grid_layout(n_districts)
    names = list(centroids)
    adjacency = AdjacencyGraph(names, edges)
    days = _days(months)
    xy = np.array([centroids[d] for d in names])

    fields = {v: weather_field(v, days, xy[:, 0], xy[:, 1], rng) for v in WEATHER_EFFECTS}
    covariates = {v: _monthly(f, days, v) for v, f in fields.items()}

    hotspot = names[int(rng.integers(n_districts))]
    effect = np.zeros(n_districts)
    effect[names.index(hotspot)] = 1.0
    for nb in adjacency.neighbours(hotspot):
        effect[names.index(nb)] = 0.5

    moy = np.asarray(months.month)
    season = 1.2 * np.sin(2 * np.pi * (moy - 4) / 12.0)
    log_rate = np.log(BASE_RATE) + effect[:, None] + season[None, :]
    for v, beta in WEATHER_EFFECTS.items():
        z = covariates[v]
        z = (z - z.mean(axis=1, keepdims=True)) / np.maximum(z.std(axis=1, keepdims=True), 1e-9)
        lagged = np.concatenate([np.zeros((n_districts, 3)), z[:, :-3]], axis=1)
        log_rate = log_rate + beta * lagged
    yearly = rng.normal(0.0, 0.3, size=len(set(months.year)))
    log_rate = log_rate + yearly[np.asarray(months.year) - months[0].year][None, :]

    outbreaks = []
    for _ in range(n_outbreaks):
        i = int(rng.integers(n_districts))
        t = int(rng.integers(12, n_months - 2))
        log_rate[i, t:t + 3] += np.log(4.0)
        outbreaks.append((names[i], t))

    population = _population(n_districts, months, rng)
    mu = population * np.exp(log_rate)
    cases = rng.negative_binomial(NB_SIZE, NB_SIZE / (NB_SIZE + mu)).astype(np.int64)

    panel = PanelDataset(names, months, cases, population, adjacency, covariates,
                         {"tmin": "degC", "rain": "mm"})
    data = SyntheticData(panel, centroids, outbreaks=outbreaks, hotspot=hotspot)
    data.stations = synthetic_stations(centroids, days, n_stations, rng)
    data.grids = synthetic_grids(centroids, days, grid_size, rng)
    logger.info(f"Synthetic panel: {n_districts} districts x {n_months} months, hotspot {hotspot}, "
                f"{len(outbreaks)} planted outbreaks")
    return data


def _extent(centroids: Dict[str, Tuple[float, float]]) -> Tuple[float, float, float, float]:
    xy = np.array(list(centroids.values()))
    return xy[:, 0].min() - SPACING, xy[:, 0].max() + SPACING, xy[:, 1].min() - SPACING, xy[:, 1].max() + SPACING


def synthetic_stations(centroids: Dict[str, Tuple[float, float]], days: pd.DatetimeIndex,
                       n_stations: int, rng: np.random.Generator) -> List[StationSeries]:
    """Stations scattered over the district extent observing the same fields with noise"""
    x0, x1, y0, y1 = _extent(centroids)
    xs, ys = rng.uniform(x0, x1, n_stations), rng.uniform(y0, y1, n_stations)
    tmin = weather_field("tmin", days, xs, ys, rng) + rng.normal(0, 0.2, size=(len(days), n_stations))
    rain = weather_field("rain", days, xs, ys, rng)
    stations = []
    for k in range(n_stations):
        daily = pd.DataFrame({"tmin": tmin[:, k], "tmax": tmin[:, k] + 8.0, "tavg": tmin[:, k] + 4.0,
                              "rh": 80.0, "rain": rain[:, k]}, index=days)
        stations.append(StationSeries(f"S{k + 1:02d}", float(xs[k]), float(ys[k]), daily))
    return stations


def synthetic_grids(centroids: Dict[str, Tuple[float, float]], days: pd.DatetimeIndex,
                    grid_size: int, rng: np.random.Generator) -> Dict[str, GridField]:
    """Regular reanalysis-style grids covering the district extent"""
    x0, x1, y0, y1 = _extent(centroids)
    cell = max(x1 - x0, y1 - y0) / grid_size
    cx, cy = np.meshgrid(x0 + cell * np.arange(grid_size), y0 + cell * np.arange(grid_size))
    grids = {}
    for v in WEATHER_EFFECTS:
        values = weather_field(v, days, cx.ravel(), cy.ravel(), rng).reshape(len(days), grid_size, grid_size)
        grids[v] = GridField(v, days, float(x0), float(y0), float(cell), values)
    return grids


def write_fixture(data: SyntheticData, out_dir: str, seed: int) -> Dict[str, str]:
    """Write every input file plus a config.toml pointing at them; returns the paths"""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "panel": os.path.join(out_dir, "panel.csv"),
        "adjacency": os.path.join(out_dir, "adjacency.csv"),
        "centroids": os.path.join(out_dir, "centroids.csv"),
        "stations": os.path.join(out_dir, "stations.csv"),
    }
    write_panel(data.panel, paths["panel"], paths["adjacency"])
    write_centroids(data.centroids, paths["centroids"])
    write_stations(data.stations, paths["stations"])
    panel = data.panel
    for name, values in panel.covariates.items():
        idx = pd.MultiIndex.from_product([panel.districts, range(panel.n_months)], names=["district", "t"])
        frame = idx.to_frame(index=False)
        frame["year"] = panel.year_index[frame["t"]]
        frame["month"] = panel.month_of_year[frame["t"]]
        frame[name] = values.reshape(-1)
        paths[f"covariate:{name}"] = os.path.join(out_dir, "covariates", f"{name}.csv")
        write_covariate(frame, name, paths[f"covariate:{name}"])
    for name, grid in data.grids.items():
        paths[f"grid:{name}"] = os.path.join(out_dir, "grids", f"{name}.csv")
        write_grid_csv(grid, paths[f"grid:{name}"])
    paths["config"] = os.path.join(out_dir, "config.toml")
    with open(paths["config"], "w", encoding="utf-8") as f:
        f.write(fixture_config(data.panel, paths, seed))
    logger.info(f"Wrote synthetic fixture to {out_dir}")
    return paths


def fixture_config(panel: PanelDataset, paths: Dict[str, str], seed: int) -> str:
    """A runnable config: twelve cross-validation origins, then one evaluation origin with a full horizon"""
    months = panel.months
    cv_start, cv_end = months[-16], months[-5]
    rel = {k: os.path.basename(os.path.dirname(v)) + "/" + os.path.basename(v) if ":" in k else os.path.basename(v)
           for k, v in paths.items()}
    covs = ", ".join(f'{k.split(":")[1]} = "{v}"' for k, v in rel.items() if k.startswith("covariate:"))
    grids = ", ".join(f'{k.split(":")[1]} = "{v}"' for k, v in rel.items() if k.startswith("grid:"))
    return (
        f"seed = {int(seed)}\n\n"
        f"[paths]\n"
        f'panel = "{rel["panel"]}"\n'
        f'adjacency = "{rel["adjacency"]}"\n'
        f'centroids = "{rel["centroids"]}"\n'
        f'stations = "{rel["stations"]}"\n'
        f"covariates = {{ {covs} }}\n"
        f"grids = {{ {grids} }}\n\n"
        f"[plan]\n"
        f'initial_training_end = "{months[23]}"\n'
        f'cv_start = "{cv_start}"\n'
        f'cv_end = "{cv_end}"\n'
        f'eval_start = "{months[-4]}"\n'
        f'eval_end = "{months[-4]}"\n\n'
        f"[models]\n"
        f'presets = ["reference", "st2"]\n'
        f'members = ["st2"]\n\n'
        f"[thresholds]\n"
        f"n_sims = 1000\n"
    )


def simulate_latent(template: PanelDataset, intercept: float, betas: Dict[str, float],
                    seasonal_amplitude: float = 0.8, district_sd: float = 0.3,
                    covariate_lag: int = 3, seed: int = 0) -> Tuple[PanelDataset, np.ndarray]:
    """
    Poisson counts with log mu = log p + intercept + sum_k beta_k x_k(t - lag) + u_i + season,
    x standardized over the whole panel. Returns the panel and the district effects.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7002]))
    n, T = template.n_districts, template.n_months
    eta = np.log(template.population) + intercept
    for name, beta in betas.items():
        x = standardize(lag_covariate(template, name, covariate_lag), slice(0, T))
        eta = eta + beta * np.nan_to_num(x.values[:, :, 0])
    u = rng.normal(0.0, district_sd, size=n)
    u -= u.mean()
    moy = template.month_of_year
    season = seasonal_amplitude * np.sin(2 * np.pi * moy / 12.0)
    eta = eta + u[:, None] + season[None, :]
    cases = rng.poisson(np.exp(eta)).astype(np.int64)
    return _with_cases(template, cases), u


def simulate_hhh4(template: PanelDataset, params: Hhh4Params, seed: int = 0) -> PanelDataset:
    """
    Negative binomial endemic-epidemic counts without covariates:
    mu = p exp(a_nu + g1 sin + g2 cos) + exp(a_lam) Y[i, t-1] + exp(a_phi) sum_j w_ij Y[j, t-1].
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7003]))
    n, T = template.n_districts, template.n_months
    angle = 2 * np.pi * template.month_of_year / 12.0
    endemic = template.population * np.exp(params.endemic[0] + params.endemic[1] * np.sin(angle)
                                           + params.endemic[2] * np.cos(angle))[None, :]
    lam = np.exp(params.epidemic[0])
    phi = np.exp(params.neighbourhood[0]) if n > 1 and len(params.neighbourhood) else 0.0
    W = powerlaw_weights(template.order_matrix(), params.decay) if n > 1 else np.zeros((n, n))
    cases = np.zeros((n, T), dtype=np.int64)
    cases[:, 0] = rng.poisson(endemic[:, 0])
    for t in range(1, T):
        prev = cases[:, t - 1].astype(float)
        mu = endemic[:, t] + lam * prev + phi * (W @ prev)
        cases[:, t] = rng.negative_binomial(params.psi, params.psi / (params.psi + mu))
    return _with_cases(template, cases)


def mixture_benchmark(seed: int = 0, n_districts: int = 12, n_months: int = 96) -> SyntheticData:
    """
    Districts split into three groups whose counts come from a latent Poisson model,
    an endemic-epidemic model and the seasonal outbreak generator respectively.
    """
    base = synthetic_panel(n_districts, n_months, seed=seed, n_stations=4, grid_size=2)
    latent, _ = simulate_latent(base.panel, np.log(BASE_RATE), {"tmin": 0.3, "rain": 0.2}, seed=seed)
    hhh4 = simulate_hhh4(base.panel, Hhh4Params(
        endemic=np.array([np.log(BASE_RATE) - 0.5, 0.6, -0.4]), epidemic=np.array([np.log(0.5)]),
        neighbourhood=np.array([np.log(0.1)]), decay=2.0, psi=8.0), seed=seed)
    group = np.arange(n_districts) % 3
    cases = np.where(group[:, None] == 0, latent.cases,
                     np.where(group[:, None] == 1, hhh4.cases, base.panel.cases))
    base.panel = _with_cases(base.panel, cases)
    return base


def _with_cases(template: PanelDataset, cases: np.ndarray) -> PanelDataset:
    return PanelDataset(template.districts, template.months, cases, template.population,
                        template.adjacency, dict(template.covariates), dict(template.covariate_units))


def bernoulli_outcomes(probabilities: Sequence[float], seed: int = 0) -> np.ndarray:
    """Outcomes drawn from the probabilities themselves, for calibration checks"""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7004]))
    p = np.asarray(probabilities, dtype=float)
    return (rng.random(p.shape) < p).astype(float)
