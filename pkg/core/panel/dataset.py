"""
District x month surveillance panel
Holds case counts, populations, covariates and the adjacency graph
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from core.errors import BadInputError
from utils.logger import setup_logger

logger = setup_logger("panel")

INCIDENCE_SCALE = 100000.0


@dataclass
class Violation:
    """A single failed panel invariant"""
    code: str  # "cases_negative", "cases_non_integer", "population", "months", "shape", "adjacency", "connectivity"
    message: str
    cell: Optional[Tuple[int, int]] = None


class AdjacencyGraph:
    """Undirected neighbour relation over districts with shortest-path orders"""

    def __init__(self, districts: Sequence[str], edges: Sequence[Tuple[str, str]]):
        self.graph = nx.Graph()
        self.graph.add_nodes_from(districts)
        for a, b in edges:
            if a != b:
                self.graph.add_edge(a, b)
        self._order: Optional[np.ndarray] = None
        self._order_districts: Optional[Tuple[str, ...]] = None

    @property
    def districts(self) -> List[str]:
        return list(self.graph.nodes)

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return list(self.graph.edges)

    def neighbours(self, district: str) -> List[str]:
        return sorted(self.graph.neighbors(district))

    def isolated(self) -> List[str]:
        return sorted(nx.isolates(self.graph))

    def is_connected(self) -> bool:
        return self.graph.number_of_nodes() > 0 and nx.is_connected(self.graph)

    def order_matrix(self, districts: Sequence[str]) -> np.ndarray:
        """
        Neighbourhood order o[j, i] = shortest path length between districts.
        Unreachable pairs carry +inf.
        """
        districts = tuple(districts)
        if self._order is not None and self._order_districts == districts:
            return self._order

        index = {d: k for k, d in enumerate(districts)}
        order = np.full((len(districts), len(districts)), np.inf)
        for source, lengths in nx.all_pairs_shortest_path_length(self.graph):
            if source not in index:
                continue
            for target, length in lengths.items():
                if target in index:
                    order[index[source], index[target]] = float(length)

        self._order = order
        self._order_districts = districts
        return order

    def adjacency_matrix(self, districts: Sequence[str]) -> np.ndarray:
        """Symmetric 0/1 adjacency in the given district order"""
        return nx.to_numpy_array(self.graph, nodelist=list(districts), dtype=float)


@dataclass
class PanelDataset:
    """District x month panel. Arrays are (n districts, T months)."""
    districts: Tuple[str, ...]
    months: pd.PeriodIndex
    cases: np.ndarray
    population: np.ndarray
    adjacency: AdjacencyGraph
    covariates: Dict[str, np.ndarray] = field(default_factory=dict)
    covariate_units: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.districts = tuple(self.districts)
        self.months = pd.PeriodIndex(self.months, freq="M")
        self.cases = np.asarray(self.cases)
        self.population = np.asarray(self.population, dtype=float)
        self.covariates = {k: np.asarray(v, dtype=float) for k, v in self.covariates.items()}
        for arr in [self.cases, self.population, *self.covariates.values()]:
            arr.setflags(write=False)

    @property
    def n_districts(self) -> int:
        return len(self.districts)

    @property
    def n_months(self) -> int:
        return len(self.months)

    @property
    def year_index(self) -> np.ndarray:
        """a[t]: calendar year of each month"""
        return np.asarray(self.months.year)

    @property
    def month_of_year(self) -> np.ndarray:
        """m[t]: month of year (1..12) of each month"""
        return np.asarray(self.months.month)

    def month_at(self, t: int) -> pd.Period:
        """Calendar month of index t, extrapolating past either end"""
        return self.months[0] + t

    def index_of(self, month) -> int:
        period = pd.Period(month, freq="M")
        return int((period - self.months[0]).n)

    def district_index(self, district: str) -> int:
        try:
            return self.districts.index(district)
        except ValueError:
            raise BadInputError(f"Unknown district: {district}")

    def calendar(self, n_total: int) -> Tuple[np.ndarray, np.ndarray]:
        """Year and month-of-year arrays for an axis of n_total months"""
        periods = self.months[0] + np.arange(n_total)
        years = np.array([p.year for p in periods])
        months = np.array([p.month for p in periods])
        return years, months

    def population_padded(self, n_total: int) -> np.ndarray:
        """Population on an axis of n_total months; months past the end hold the last year"""
        if n_total <= self.n_months:
            return np.array(self.population[:, :n_total])
        extra = np.repeat(self.population[:, -1:], n_total - self.n_months, axis=1)
        return np.concatenate([self.population, extra], axis=1)

    def cases_padded(self, n_total: int) -> np.ndarray:
        """Cases as float with NaN past the end of the panel"""
        out = np.full((self.n_districts, n_total), np.nan)
        k = min(n_total, self.n_months)
        out[:, :k] = self.cases[:, :k]
        return out

    def covariate_padded(self, name: str, n_total: int) -> np.ndarray:
        if name not in self.covariates:
            raise BadInputError(f"Unknown covariate: {name}")
        out = np.full((self.n_districts, n_total), np.nan)
        k = min(n_total, self.n_months)
        out[:, :k] = self.covariates[name][:, :k]
        return out

    def incidence(self) -> np.ndarray:
        """Cases per 100,000 population"""
        return INCIDENCE_SCALE * self.cases / self.population

    def order_matrix(self) -> np.ndarray:
        return self.adjacency.order_matrix(self.districts)

    def head(self, n_months: int) -> "PanelDataset":
        """Panel restricted to its first n_months months"""
        if n_months < 1 or n_months > self.n_months:
            raise BadInputError(f"Cannot keep {n_months} of {self.n_months} months")
        return PanelDataset(
            districts=self.districts,
            months=self.months[:n_months],
            cases=self.cases[:, :n_months],
            population=self.population[:, :n_months],
            adjacency=self.adjacency,
            covariates={k: v[:, :n_months] for k, v in self.covariates.items()},
            covariate_units=dict(self.covariate_units),
        )

    def subset_districts(self, districts: Sequence[str]) -> "PanelDataset":
        """Panel restricted to (and reordered by) the given districts"""
        idx = [self.district_index(d) for d in districts]
        keep = set(districts)
        edges = [(a, b) for a, b in self.adjacency.edges if a in keep and b in keep]
        return PanelDataset(
            districts=tuple(districts),
            months=self.months,
            cases=self.cases[idx],
            population=self.population[idx],
            adjacency=AdjacencyGraph(districts, edges),
            covariates={k: v[idx] for k, v in self.covariates.items()},
            covariate_units=dict(self.covariate_units),
        )


def validate(panel: PanelDataset) -> List[Violation]:
    """
    Check every panel invariant. Never raises; an empty list means the panel is well formed.
    """
    violations: List[Violation] = []
    n, T = panel.n_districts, panel.n_months

    if T > 1:
        steps = np.diff(panel.months.asi8)
        if np.any(steps != 1):
            violations.append(Violation("months", "months must be strictly increasing without gaps"))

    shapes = {"cases": panel.cases.shape, "population": panel.population.shape}
    shapes.update({f"covariate:{k}": v.shape for k, v in panel.covariates.items()})
    for name, shape in shapes.items():
        if shape != (n, T):
            violations.append(Violation("shape", f"{name} has shape {shape}, expected {(n, T)}"))
    if any(v.code == "shape" for v in violations):
        return violations

    cases = panel.cases.astype(float)
    for i, t in zip(*np.nonzero(~np.isfinite(cases) | (cases < 0))):
        violations.append(Violation(
            "cases_negative", f"cases[{i},{t}] = {cases[i, t]} is negative or missing", (int(i), int(t))
        ))
    finite = np.isfinite(cases)
    for i, t in zip(*np.nonzero(finite & (cases != np.round(cases)))):
        violations.append(Violation(
            "cases_non_integer", f"cases[{i},{t}] = {cases[i, t]} is not an integer", (int(i), int(t))
        ))

    pop = panel.population
    for i, t in zip(*np.nonzero(~(pop > 0))):
        violations.append(Violation(
            "population", f"population[{i},{t}] = {pop[i, t]} must be positive", (int(i), int(t))
        ))

    graph_districts = set(panel.adjacency.districts)
    panel_districts = set(panel.districts)
    for d in sorted(graph_districts - panel_districts):
        violations.append(Violation("adjacency", f"district {d} in adjacency but not in panel"))
    for d in sorted(panel_districts - graph_districts):
        violations.append(Violation("adjacency", f"district {d} in panel but not in adjacency"))

    isolated = [d for d in panel.adjacency.isolated() if d in panel_districts]
    if isolated:
        violations.append(Violation(
            "connectivity", f"districts without neighbours: {', '.join(isolated)}"
        ))
    elif n > 1 and not panel.adjacency.is_connected():
        violations.append(Violation("connectivity", "adjacency graph is not connected"))

    return violations


def require_valid(panel: PanelDataset) -> PanelDataset:
    """Raise BadInputError listing violations, or return the panel"""
    violations = validate(panel)
    if violations:
        summary = "; ".join(v.message for v in violations[:5])
        logger.error(f"Panel failed validation with {len(violations)} violations: {summary}")
        raise BadInputError(f"Invalid panel: {summary}")
    return panel
