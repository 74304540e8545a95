"""
Random-effect blocks for latent Gaussian count models

Each block maps standard-normal latents xi to effect values v = D(h) xi over its
levels, and maps (district, year, month-of-year) cells to levels. Hyperparameters
h live on unconstrained scales: log sigma, atanh rho, logit phi.
"""

from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.errors import SpecError

LOG_SIGMA_BOUNDS = (-12.0, 4.0)
ATANH_RHO_BOUNDS = (-6.0, 6.0)
LOGIT_PHI_BOUNDS = (-8.0, 8.0)
PHI_PRIOR_SD = 2.0
NULL_TOL = 1e-9


def sigma_penalty(log_sigma: float) -> Tuple[float, float]:
    """Half-normal(1) prior on sigma expressed on log sigma, Jacobian included"""
    s2 = np.exp(2.0 * log_sigma)
    return 0.5 * s2 - log_sigma, s2 - 1.0


def geometric_mean(x: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(x))))


def scaled_basis(structure: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Basis M with M M^T equal to the generalized inverse of the scaled structure matrix.

    The structure is scaled so the geometric mean of its generalized-inverse diagonal
    is one. Columns of M span the complement of the null space, so M xi always
    satisfies the null-space (sum-to-zero) constraints. Returns (M, scale).
    """
    vals, vecs = np.linalg.eigh(structure)
    keep = vals > NULL_TOL * max(1.0, float(vals.max()))
    if not keep.any():
        raise SpecError("Structure matrix has no positive eigenvalues")
    pinv_diag = (vecs[:, keep] ** 2 / vals[keep]).sum(axis=1)
    scale = geometric_mean(pinv_diag)
    return vecs[:, keep] / np.sqrt(scale * vals[keep]), scale


def cyclic_rw1_structure(size: int = 12) -> np.ndarray:
    """Precision structure of a cyclic first-order random walk"""
    R = 2.0 * np.eye(size)
    idx = np.arange(size)
    R[idx, (idx + 1) % size] -= 1.0
    R[idx, (idx - 1) % size] -= 1.0
    return R


def besag_structure(adjacency: np.ndarray) -> np.ndarray:
    """Graph Laplacian (degree minus adjacency); rows sum to zero"""
    A = np.asarray(adjacency, dtype=float)
    return np.diag(A.sum(axis=1)) - A


def bym2_basis(adjacency: np.ndarray) -> np.ndarray:
    """Scaled Besag basis for connected components, each constrained to sum to zero"""
    return scaled_basis(besag_structure(adjacency))[0]


class EffectBlock(ABC):
    """A group of random effects sharing hyperparameters"""

    name: str = "effect"

    def __init__(self, n_latent: int, n_levels: int):
        self.n_latent = n_latent
        self.n_levels = n_levels

    @property
    @abstractmethod
    def hyper_names(self) -> List[str]:
        ...

    @property
    def n_hyper(self) -> int:
        return len(self.hyper_names)

    @abstractmethod
    def hyper_init(self) -> np.ndarray:
        ...

    @abstractmethod
    def hyper_bounds(self) -> List[Tuple[float, float]]:
        ...

    @abstractmethod
    def matrix(self, h: np.ndarray) -> np.ndarray:
        """D(h), shape (n_levels, n_latent)"""

    @abstractmethod
    def matrix_grads(self, h: np.ndarray) -> List[np.ndarray]:
        """dD/dh_j for each hyperparameter"""

    @abstractmethod
    def hyper_penalty(self, h: np.ndarray) -> Tuple[float, np.ndarray]:
        """Negative log prior of h and its gradient"""

    @abstractmethod
    def levels(self, district: np.ndarray, year: np.ndarray, month: np.ndarray) -> np.ndarray:
        """Level index of each cell; -1 for levels outside the fitted range"""

    def extend(self, h: np.ndarray, values: np.ndarray, district: np.ndarray, year: np.ndarray,
               month: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """
        Effect draws at cells given sampled values over the fitted levels.
        values has shape (S, n_levels); returns (S, n_cells).
        """
        idx = self.levels(district, year, month)
        if np.any(idx < 0):
            raise SpecError(f"{self.name} has no level for some forecast cells")
        return values[:, idx]

    def extend_mean(self, h: np.ndarray, values: np.ndarray, district: np.ndarray, year: np.ndarray,
                    month: np.ndarray) -> np.ndarray:
        """Conditional mean of the effect at cells given one value vector over the fitted levels"""
        idx = self.levels(district, year, month)
        if np.any(idx < 0):
            raise SpecError(f"{self.name} has no level for some forecast cells")
        return values[idx]

    def summary(self, h: np.ndarray) -> Dict[str, float]:
        return {name: float(v) for name, v in zip(self.hyper_names, h)}

    def to_dict(self) -> dict:
        return {"kind": type(self).__name__, "name": self.name}


class IIDBlock(EffectBlock):
    """Unstructured effect per district: v = sigma * xi"""

    def __init__(self, n_districts: int, name: str = "district_iid"):
        super().__init__(n_districts, n_districts)
        self.name = name

    @property
    def hyper_names(self) -> List[str]:
        return [f"{self.name}.log_sigma"]

    def hyper_init(self) -> np.ndarray:
        return np.array([np.log(0.5)])

    def hyper_bounds(self):
        return [LOG_SIGMA_BOUNDS]

    def matrix(self, h):
        return np.exp(h[0]) * np.eye(self.n_levels)

    def matrix_grads(self, h):
        return [self.matrix(h)]

    def hyper_penalty(self, h):
        value, grad = sigma_penalty(h[0])
        return value, np.array([grad])

    def levels(self, district, year, month):
        return np.asarray(district, dtype=int)

    def to_dict(self):
        return {"kind": "iid", "name": self.name, "n_districts": self.n_levels}


class StructuredBlock(EffectBlock):
    """
    Intrinsic Gaussian effect v = sigma * kron(I_groups, M) xi with a fixed scaled basis M.
    Used for cyclic month-of-year random walks (one per district) and Besag fields.
    """

    def __init__(self, basis: np.ndarray, n_groups: int, level_key: str, name: str):
        self.basis = np.asarray(basis, dtype=float)
        self.group_size = self.basis.shape[0]
        self.n_groups = n_groups
        self.level_key = level_key
        self.name = name
        self._full = np.kron(np.eye(n_groups), self.basis)
        super().__init__(self._full.shape[1], self._full.shape[0])

    @property
    def hyper_names(self):
        return [f"{self.name}.log_sigma"]

    def hyper_init(self):
        return np.array([np.log(0.5)])

    def hyper_bounds(self):
        return [LOG_SIGMA_BOUNDS]

    def matrix(self, h):
        return np.exp(h[0]) * self._full

    def matrix_grads(self, h):
        return [self.matrix(h)]

    def hyper_penalty(self, h):
        value, grad = sigma_penalty(h[0])
        return value, np.array([grad])

    def levels(self, district, year, month):
        district = np.asarray(district, dtype=int)
        if self.level_key == "district_month":
            return district * self.group_size + (np.asarray(month, dtype=int) - 1)
        return district

    def to_dict(self):
        return {"kind": "structured", "name": self.name, "level_key": self.level_key,
                "n_groups": self.n_groups, "basis": self.basis.tolist()}


def seasonal_block(n_districts: int) -> StructuredBlock:
    """Cyclic RW1 over month of year, one walk per district with a shared sigma"""
    basis, _ = scaled_basis(cyclic_rw1_structure(12))
    return StructuredBlock(basis, n_districts, "district_month", "season")


def besag_block(adjacency: np.ndarray) -> StructuredBlock:
    return StructuredBlock(bym2_basis(adjacency), 1, "district", "besag")


class BYM2Block(EffectBlock):
    """
    District effect sigma * (sqrt(1 - phi) * u + sqrt(phi) * s), u iid and s a scaled
    Besag field; latents are (xi_u, xi_s).
    """

    name = "bym2"

    def __init__(self, adjacency: np.ndarray):
        self.adjacency = np.asarray(adjacency, dtype=float)
        self.basis = bym2_basis(self.adjacency)
        n = self.basis.shape[0]
        super().__init__(n + self.basis.shape[1], n)

    @property
    def hyper_names(self):
        return ["bym2.log_sigma", "bym2.logit_phi"]

    def hyper_init(self):
        return np.array([np.log(0.5), 0.0])

    def hyper_bounds(self):
        return [LOG_SIGMA_BOUNDS, LOGIT_PHI_BOUNDS]

    def _parts(self, h):
        sigma = np.exp(h[0])
        phi = 1.0 / (1.0 + np.exp(-h[1]))
        return sigma, phi

    def matrix(self, h):
        sigma, phi = self._parts(h)
        n = self.n_levels
        return sigma * np.hstack([np.sqrt(1.0 - phi) * np.eye(n), np.sqrt(phi) * self.basis])

    def matrix_grads(self, h):
        sigma, phi = self._parts(h)
        n = self.n_levels
        d_phi = sigma * np.hstack([
            -0.5 * phi * np.sqrt(1.0 - phi) * np.eye(n),
            0.5 * (1.0 - phi) * np.sqrt(phi) * self.basis,
        ])
        return [self.matrix(h), d_phi]

    def hyper_penalty(self, h):
        value, grad = sigma_penalty(h[0])
        return (value + 0.5 * h[1] ** 2 / PHI_PRIOR_SD ** 2,
                np.array([grad, h[1] / PHI_PRIOR_SD ** 2]))

    def levels(self, district, year, month):
        return np.asarray(district, dtype=int)

    def summary(self, h):
        sigma, phi = self._parts(h)
        return {"bym2.sigma": float(sigma), "bym2.phi": float(phi)}

    def to_dict(self):
        return {"kind": "bym2", "name": self.name, "adjacency": self.adjacency.tolist()}


class AR1Block(EffectBlock):
    """
    Stationary AR(1) over years: delta_0 = sigma xi_0,
    delta_k = rho delta_{k-1} + sigma sqrt(1 - rho^2) xi_k.
    With n_groups > 1 each district carries its own series with shared hyperparameters.
    """

    def __init__(self, first_year: int, n_years: int, n_groups: int = 1, name: str = "ar1"):
        if n_years < 1:
            raise SpecError("AR(1) effect needs at least one year")
        self.first_year = int(first_year)
        self.n_years = int(n_years)
        self.n_groups = int(n_groups)
        self.name = name
        n = self.n_years * self.n_groups
        super().__init__(n, n)

    @property
    def hyper_names(self):
        return [f"{self.name}.log_sigma", f"{self.name}.atanh_rho"]

    def hyper_init(self):
        return np.array([np.log(0.5), 0.0])

    def hyper_bounds(self):
        return [LOG_SIGMA_BOUNDS, ATANH_RHO_BOUNDS]

    def _recursion(self, rho: float) -> Tuple[np.ndarray, np.ndarray]:
        """A(rho) and dA/d(atanh rho) for one series"""
        K = self.n_years
        k = np.arange(K)[:, None]
        j = np.arange(K)[None, :]
        gap = k - j
        lower = gap >= 0
        g = np.where(lower, gap, 0)
        s = np.sqrt(max(1.0 - rho ** 2, 0.0))
        pow_g = np.where(lower, rho ** g, 0.0)
        pow_gm1 = np.where(lower & (g > 0), rho ** np.maximum(g - 1, 0), 0.0)

        A = pow_g * s
        A[:, 0] = pow_g[:, 0]
        dz = (1.0 - rho ** 2)
        dA = dz * g * pow_gm1 * s - pow_g * rho * s
        dA[:, 0] = dz * g[:, 0] * pow_gm1[:, 0]
        return np.where(lower, A, 0.0), np.where(lower, dA, 0.0)

    def matrix(self, h):
        sigma, rho = np.exp(h[0]), np.tanh(h[1])
        A, _ = self._recursion(rho)
        return sigma * np.kron(np.eye(self.n_groups), A)

    def matrix_grads(self, h):
        sigma, rho = np.exp(h[0]), np.tanh(h[1])
        A, dA = self._recursion(rho)
        eye = np.eye(self.n_groups)
        return [sigma * np.kron(eye, A), sigma * np.kron(eye, dA)]

    def hyper_penalty(self, h):
        value, grad = sigma_penalty(h[0])
        return value + 0.5 * h[1] ** 2, np.array([grad, h[1]])

    def _series(self, district):
        district = np.asarray(district, dtype=int)
        return district if self.n_groups > 1 else np.zeros_like(district)

    def levels(self, district, year, month):
        k = np.asarray(year, dtype=int) - self.first_year
        inside = (k >= 0) & (k < self.n_years)
        return np.where(inside, self._series(district) * self.n_years + k, -1)

    def extend(self, h, values, district, year, month, rng):
        sigma, rho = np.exp(h[0]), np.tanh(h[1])
        year = np.asarray(year, dtype=int)
        series = self._series(district)
        k = year - self.first_year
        if np.any(k < 0):
            raise SpecError("AR(1) effect cannot reach before its first year")
        S = values.shape[0]
        out = np.empty((S, len(year)))

        inside = k < self.n_years
        out[:, inside] = values[:, series[inside] * self.n_years + k[inside]]

        # years past the fit share one draw per (series, year)
        for g, yr in sorted(set(zip(series[~inside].tolist(), year[~inside].tolist()))):
            steps = yr - (self.first_year + self.n_years - 1)
            last = values[:, g * self.n_years + self.n_years - 1]
            scale = sigma * np.sqrt(max(1.0 - rho ** (2 * steps), 0.0))
            draw = rho ** steps * last + scale * rng.standard_normal(S)
            cols = (~inside) & (series == g) & (year == yr)
            out[:, cols] = draw[:, None]
        return out

    def extend_mean(self, h, values, district, year, month):
        rho = np.tanh(h[1])
        k = np.asarray(year, dtype=int) - self.first_year
        if np.any(k < 0):
            raise SpecError("AR(1) effect cannot reach before its first year")
        last = self.n_years - 1
        base = values[self._series(district) * self.n_years + np.minimum(k, last)]
        return base * rho ** np.maximum(k - last, 0)

    def summary(self, h):
        return {f"{self.name}.sigma": float(np.exp(h[0])), f"{self.name}.rho": float(np.tanh(h[1]))}

    def to_dict(self):
        return {"kind": "ar1", "name": self.name, "first_year": self.first_year,
                "n_years": self.n_years, "n_groups": self.n_groups}


def block_from_dict(data: dict) -> EffectBlock:
    kind = data["kind"]
    if kind == "iid":
        return IIDBlock(data["n_districts"], data["name"])
    if kind == "structured":
        return StructuredBlock(np.asarray(data["basis"]), data["n_groups"], data["level_key"], data["name"])
    if kind == "bym2":
        return BYM2Block(np.asarray(data["adjacency"]))
    if kind == "ar1":
        return AR1Block(data["first_year"], data["n_years"], data["n_groups"], data["name"])
    raise SpecError(f"Unknown effect block: {kind}")
