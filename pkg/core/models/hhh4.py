"""
Endemic-epidemic negative binomial model
mu = nu + lambda * Y[i, t-1] + phi * sum_j w_ji Y[j, t-1] with power-law neighbourhood weights
"""

import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.special import digamma, gammaln
from statsmodels.tools.numdiff import approx_fprime

from core.errors import BadInputError, ConvergenceError, MissingCovariateError, SpecError
from core.models.base import (
    NEWEST_DATUM, FitDiagnostics, FittedModel, ForecastDistribution, ForecastingModel, ModelSpec,
    to_distributions,
)
from core.models.inference import (
    COEF_PRIOR_SD, ETA_CLIP, GRADIENT_TOL, INTERCEPT_PRIOR_SD, MAX_ITER,
    _projected, cholesky_with_jitter, relative_gradient,
)
from core.panel.dataset import PanelDataset
from core.panel.features import (
    combine, cumulative_incidence, empty_features, lag_covariate, newest_datum, standardize,
)
from utils.logger import setup_logger, log_fit_event

logger = setup_logger("hhh4")

MIN_TRAIN_MONTHS = 24
LOG_DECAY_BOUNDS = (-4.0, 4.0)
LOG_PSI_BOUNDS = (-5.0, 12.0)
DISTRICT_PRIOR_SD = 1.0


def powerlaw_weights(order: np.ndarray, decay) -> np.ndarray:
    """
    Power-law neighbourhood weights indexed [target i, source j]:
    w[i, j] proportional to order[j, i] ** -decay for j != i, each target row summing to one.
    decay may be a scalar or a vector, giving an (S, n, n) stack.
    """
    order = np.asarray(order, dtype=float)
    decay = np.asarray(decay, dtype=float)
    if np.any(~(decay > 0)):
        raise SpecError("Power-law decay must be positive")
    usable = np.isfinite(order) & (order > 0)
    log_o = np.where(usable, np.log(np.where(usable, order, 1.0)), 0.0)
    raw = np.where(usable, np.exp(-decay[..., None, None] * log_o), 0.0)
    totals = raw.sum(axis=-1, keepdims=True)
    return np.divide(raw, totals, out=np.zeros_like(raw), where=totals > 0)


def _weights_and_grad(order: np.ndarray, decay: float) -> Tuple[np.ndarray, np.ndarray]:
    """Weights and their derivative with respect to log decay"""
    W = powerlaw_weights(order, decay)
    usable = np.isfinite(order) & (order > 0)
    log_o = np.where(usable, np.log(np.where(usable, order, 1.0)), 0.0)
    mean_log = (W * log_o).sum(axis=1, keepdims=True)
    return W, decay * W * (mean_log - log_o)


@dataclass(frozen=True)
class Hhh4Layout:
    """Position of every parameter in the packed vector"""
    n_districts: int
    covariates: Tuple[str, ...]
    epidemic_covariates: bool = True
    neighbourhood_covariates: bool = False
    district_intercepts: bool = True

    @property
    def has_neighbourhood(self) -> bool:
        return self.n_districts > 1

    def sizes(self) -> Dict[str, int]:
        K = len(self.covariates)
        n = self.n_districts if self.district_intercepts else 0
        neigh = self.has_neighbourhood
        return {
            "endemic": 3 + K,
            "epidemic": 1 + (K if self.epidemic_covariates else 0),
            "neighbourhood": (1 + (K if self.neighbourhood_covariates else 0)) if neigh else 0,
            "endemic_re": n,
            "epidemic_re": n,
            "neighbourhood_re": n if neigh else 0,
            "log_decay": 1 if neigh else 0,
            "log_psi": 1,
        }

    def slices(self) -> Dict[str, slice]:
        out, k = {}, 0
        for key, size in self.sizes().items():
            out[key] = slice(k, k + size)
            k += size
        return out

    @property
    def size(self) -> int:
        return sum(self.sizes().values())

    def names(self) -> List[str]:
        K = list(self.covariates)
        names = ["endemic.intercept", "endemic.sin", "endemic.cos", *[f"endemic.{c}" for c in K]]
        names += ["epidemic.intercept", *([f"epidemic.{c}" for c in K] if self.epidemic_covariates else [])]
        if self.has_neighbourhood:
            names += ["neighbourhood.intercept",
                      *([f"neighbourhood.{c}" for c in K] if self.neighbourhood_covariates else [])]
        sizes = self.sizes()
        for comp in ("endemic", "epidemic", "neighbourhood"):
            names += [f"{comp}.district{i}" for i in range(sizes[f"{comp}_re"])]
        if self.has_neighbourhood:
            names.append("log_decay")
        names.append("log_psi")
        return names

    def prior_precision(self) -> np.ndarray:
        """Ridge precision per parameter; zero for decay and dispersion"""
        prec = np.zeros(self.size)
        sl = self.slices()
        for comp in ("endemic", "epidemic", "neighbourhood"):
            block = np.full(sl[comp].stop - sl[comp].start, 1.0 / COEF_PRIOR_SD ** 2)
            if block.size:
                block[0] = 1.0 / INTERCEPT_PRIOR_SD ** 2
            prec[sl[comp]] = block
            prec[sl[f"{comp}_re"]] = 1.0 / DISTRICT_PRIOR_SD ** 2
        return prec

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        out: List[Tuple[Optional[float], Optional[float]]] = [(None, None)] * self.size
        sl = self.slices()
        for key, bd in (("log_decay", LOG_DECAY_BOUNDS), ("log_psi", LOG_PSI_BOUNDS)):
            for j in range(sl[key].start, sl[key].stop):
                out[j] = bd
        return out

    def to_dict(self) -> dict:
        return {"n_districts": self.n_districts, "covariates": list(self.covariates),
                "epidemic_covariates": self.epidemic_covariates,
                "neighbourhood_covariates": self.neighbourhood_covariates,
                "district_intercepts": self.district_intercepts}

    @classmethod
    def from_dict(cls, data: dict) -> "Hhh4Layout":
        return cls(data["n_districts"], tuple(data["covariates"]), data["epidemic_covariates"],
                   data["neighbourhood_covariates"], data["district_intercepts"])


@dataclass(frozen=True)
class Hhh4Params:
    """
    Component coefficients (intercept first; endemic carries the sin/cos pair next),
    optional per-district intercepts, power-law decay d > 0 and dispersion psi > 0.
    """
    endemic: np.ndarray
    epidemic: np.ndarray
    neighbourhood: np.ndarray
    decay: float
    psi: float
    endemic_re: Optional[np.ndarray] = None
    epidemic_re: Optional[np.ndarray] = None
    neighbourhood_re: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.psi > 0:
            raise SpecError("Dispersion psi must be positive")
        if not self.decay > 0:
            raise SpecError("Power-law decay must be positive")

    @classmethod
    def from_vector(cls, layout: Hhh4Layout, theta: np.ndarray) -> "Hhh4Params":
        sl = layout.slices()
        theta = np.asarray(theta, dtype=float)
        re = (lambda key: theta[sl[key]].copy() if layout.district_intercepts else None)
        return cls(
            endemic=theta[sl["endemic"]].copy(),
            epidemic=theta[sl["epidemic"]].copy(),
            neighbourhood=theta[sl["neighbourhood"]].copy(),
            decay=float(np.exp(theta[sl["log_decay"]][0])) if layout.has_neighbourhood else 1.0,
            psi=float(np.exp(theta[sl["log_psi"]][0])),
            endemic_re=re("endemic_re"),
            epidemic_re=re("epidemic_re"),
            neighbourhood_re=re("neighbourhood_re") if layout.has_neighbourhood else None,
        )

    def to_vector(self, layout: Hhh4Layout) -> np.ndarray:
        theta = np.zeros(layout.size)
        sl = layout.slices()
        theta[sl["endemic"]] = self.endemic
        theta[sl["epidemic"]] = self.epidemic
        if layout.has_neighbourhood:
            theta[sl["neighbourhood"]] = self.neighbourhood
            theta[sl["log_decay"]] = np.log(self.decay)
        theta[sl["log_psi"]] = np.log(self.psi)
        if layout.district_intercepts:
            for key in ("endemic_re", "epidemic_re", "neighbourhood_re"):
                value = getattr(self, key)
                if value is not None and sl[key].stop > sl[key].start:
                    theta[sl[key]] = value
        return theta


@dataclass(frozen=True)
class Hhh4Design:
    """Observed counts, standardized lagged covariates and calendar terms on a padded axis"""
    cases: np.ndarray  # (n, T)
    covariates: np.ndarray  # (n, N, K)
    feature_valid: np.ndarray  # (n, N, K)
    names: Tuple[str, ...]
    harmonics: np.ndarray  # (N, 2)
    log_population: np.ndarray  # (n, N)
    order: np.ndarray
    start: pd.Period
    min_lag: Optional[int]
    lags: Tuple[Optional[int], ...] = ()

    @property
    def covariate_valid(self) -> np.ndarray:
        """(n, N) every covariate defined"""
        if self.feature_valid.shape[2] == 0:
            return np.ones(self.feature_valid.shape[:2], dtype=bool)
        return self.feature_valid.all(axis=2)

    @property
    def n_total(self) -> int:
        return self.harmonics.shape[0]

    def newest_datum(self, district: np.ndarray, t: np.ndarray) -> int:
        """Newest panel month the covariates read at cells (district, t)"""
        return newest_datum(self.feature_valid, self.lags, district, t)

    def component_designs(self, layout: Hhh4Layout, district: np.ndarray,
                          t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = len(t)
        ones = np.ones((m, 1))
        x = self.covariates[district, t, :]
        X_nu = np.hstack([ones, self.harmonics[t], x])
        X_lam = np.hstack([ones, x]) if layout.epidemic_covariates else ones
        X_phi = np.hstack([ones, x]) if layout.neighbourhood_covariates else ones
        return X_nu, X_lam, X_phi


def build_hhh4_design(spec: ModelSpec, panel: PanelDataset, train_end: int,
                      n_total: Optional[int] = None) -> Hhh4Design:
    spec.check_panel(panel)
    n_total = panel.n_months + spec.max_horizon if n_total is None else int(n_total)
    parts = [lag_covariate(panel, c, spec.covariate_lag, n_total) for c in spec.covariates]
    parts += [cumulative_incidence(panel, w, spec.case_lag, n_total) for w in spec.cumulative_windows]
    features = combine(parts) if parts else empty_features(panel, n_total)
    if features.n_features and spec.standardize:
        features = standardize(features, slice(0, train_end + 1))

    _, months = panel.calendar(n_total)
    angle = 2.0 * np.pi * months / 12.0
    return Hhh4Design(
        cases=panel.cases.astype(float),
        covariates=np.nan_to_num(features.values),
        feature_valid=features.valid,
        names=features.names,
        harmonics=np.stack([np.sin(angle), np.cos(angle)], axis=1),
        log_population=np.log(panel.population_padded(n_total)),
        order=panel.order_matrix(),
        start=panel.months[0],
        min_lag=features.min_lag(),
        lags=features.lags,
    )


def _layout_for(spec: ModelSpec, design: Hhh4Design) -> Hhh4Layout:
    return Hhh4Layout(
        n_districts=design.cases.shape[0],
        covariates=design.names,
        epidemic_covariates=spec.epidemic_covariates,
        neighbourhood_covariates=spec.neighbourhood_covariates,
        district_intercepts=spec.district_intercepts,
    )


def _linear_predictors(layout: Hhh4Layout, theta: np.ndarray, design: Hhh4Design,
                       district: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(S, m) log component multipliers for parameter rows theta (S, p)"""
    sl = layout.slices()
    X_nu, X_lam, X_phi = design.component_designs(layout, district, t)
    eta_nu = theta[:, sl["endemic"]] @ X_nu.T + design.log_population[district, t]
    eta_lam = theta[:, sl["epidemic"]] @ X_lam.T
    eta_phi = theta[:, sl["neighbourhood"]] @ X_phi.T if layout.has_neighbourhood else None
    if layout.district_intercepts:
        eta_nu = eta_nu + theta[:, sl["endemic_re"]][:, district]
        eta_lam = eta_lam + theta[:, sl["epidemic_re"]][:, district]
        if layout.has_neighbourhood:
            eta_phi = eta_phi + theta[:, sl["neighbourhood_re"]][:, district]
    return eta_nu, eta_lam, eta_phi


def _exp(eta: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(np.clip(eta, -np.inf, ETA_CLIP))


def mean_decomposition(params: Hhh4Params, layout: Hhh4Layout, design: Hhh4Design,
                       i: int, t: int) -> Tuple[float, float, float, float]:
    """(endemic, epidemic, neighbourhood, total) mean at cell (i, t) from observed counts at t-1"""
    if t < 1 or t > design.cases.shape[1]:
        raise BadInputError(f"Month {t} has no previous observed month")
    theta = params.to_vector(layout)[None, :]
    district, month = np.array([i]), np.array([t])
    eta_nu, eta_lam, eta_phi = _linear_predictors(layout, theta, design, district, month)
    prev = design.cases[:, t - 1]
    endemic = float(_exp(eta_nu)[0, 0])
    epidemic = float(_exp(eta_lam)[0, 0] * prev[i])
    neighbourhood = 0.0
    if layout.has_neighbourhood:
        W = powerlaw_weights(design.order, params.decay)
        neighbourhood = float(_exp(eta_phi)[0, 0] * (W[i] @ prev))
    return endemic, epidemic, neighbourhood, endemic + epidemic + neighbourhood


def nb_loglik(y: np.ndarray, mu: np.ndarray, psi: float) -> np.ndarray:
    """Negative binomial log pmf with Var = mu + mu^2 / psi"""
    with np.errstate(divide="ignore", invalid="ignore"):
        return (gammaln(y + psi) - gammaln(psi) - gammaln(y + 1.0)
                + psi * np.log(psi / (psi + mu)) + np.where(y > 0, y * np.log(mu / (psi + mu)), 0.0))


class Hhh4Objective:
    """Penalized negative log-likelihood over training cells with an analytic gradient"""

    def __init__(self, layout: Hhh4Layout, design: Hhh4Design, district: np.ndarray, t: np.ndarray):
        self.layout = layout
        self.design = design
        self.district = district
        self.t = t
        self.y = design.cases[district, t]
        self.y_prev = design.cases[district, t - 1]
        self.X_nu, self.X_lam, self.X_phi = design.component_designs(layout, district, t)
        self.prec = layout.prior_precision()
        self.slices = layout.slices()

    def initial(self) -> np.ndarray:
        sl = self.slices
        theta = np.zeros(self.layout.size)
        pop = np.exp(self.design.log_population[self.district, self.t])
        theta[sl["endemic"].start] = np.log(0.5 * (self.y.sum() + 0.5) / pop.sum())
        theta[sl["epidemic"].start] = np.log(0.2)
        if self.layout.has_neighbourhood:
            theta[sl["neighbourhood"].start] = np.log(0.1)
            theta[sl["log_decay"]] = np.log(2.0)
        theta[sl["log_psi"]] = np.log(2.0)
        return theta

    def __call__(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        layout, sl = self.layout, self.slices
        eta_nu, eta_lam, eta_phi = _linear_predictors(layout, theta[None, :], self.design,
                                                      self.district, self.t)
        m_nu = _exp(eta_nu[0])
        m_lam = _exp(eta_lam[0]) * self.y_prev
        mu = m_nu + m_lam
        m_phi = dneigh = None
        if layout.has_neighbourhood:
            decay = float(np.exp(theta[sl["log_decay"]][0]))
            W, dW = _weights_and_grad(self.design.order, decay)
            cases = self.design.cases
            neigh = (W @ cases)[self.district, self.t - 1]
            dneigh = (dW @ cases)[self.district, self.t - 1]
            phi = _exp(eta_phi[0])
            m_phi = phi * neigh
            mu = mu + m_phi
        psi = float(np.exp(theta[sl["log_psi"]][0]))
        mu = np.maximum(mu, 1e-300)

        y = self.y
        f = -float(np.sum(nb_loglik(y, mu, psi))) + 0.5 * float(np.sum(self.prec * theta ** 2))
        r = -(y / mu - (y + psi) / (psi + mu))

        grad = self.prec * theta
        parts = [("endemic", self.X_nu, m_nu), ("epidemic", self.X_lam, m_lam)]
        if layout.has_neighbourhood:
            parts.append(("neighbourhood", self.X_phi, m_phi))
        for comp, X, contribution in parts:
            w = r * contribution
            grad[sl[comp]] += X.T @ w
            if layout.district_intercepts:
                grad[sl[f"{comp}_re"]] += np.bincount(self.district, weights=w, minlength=layout.n_districts)
        if layout.has_neighbourhood:
            grad[sl["log_decay"]] += float(np.sum(r * phi * dneigh))
        d_psi = psi * (digamma(y + psi) - digamma(psi) + np.log(psi / (psi + mu))
                       + 1.0 - (y + psi) / (psi + mu))
        grad[sl["log_psi"]] += -float(np.sum(d_psi))
        return f, grad


@dataclass
class Hhh4State:
    """Mode and Gaussian approximation of the endemic-epidemic model"""
    layout: Hhh4Layout
    theta: np.ndarray
    chol: np.ndarray

    @property
    def params(self) -> Hhh4Params:
        return Hhh4Params.from_vector(self.layout, self.theta)

    def coefficients(self) -> Dict[str, float]:
        return dict(zip(self.layout.names(), self.theta.tolist()))

    def sample(self, n: int, rng: np.random.Generator, degenerate: bool = False) -> np.ndarray:
        if degenerate:
            return np.repeat(self.theta[None, :], n, axis=0)
        z = rng.standard_normal((len(self.theta), n))
        return (self.theta[:, None] + solve_triangular(self.chol, z, lower=True, trans="T")).T

    def to_dict(self) -> dict:
        return {"layout": self.layout.to_dict(), "theta": self.theta.tolist(), "chol": self.chol.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Hhh4State":
        return cls(Hhh4Layout.from_dict(data["layout"]), np.asarray(data["theta"], dtype=float),
                   np.asarray(data["chol"], dtype=float))


def fit_hhh4(panel: PanelDataset, spec: ModelSpec, train_end: int) -> FittedModel:
    """Penalized maximum likelihood over all parameters, then a numerical Hessian at the mode"""
    design = build_hhh4_design(spec, panel, train_end)
    layout = _layout_for(spec, design)
    valid = design.covariate_valid[:, :train_end + 1].copy()
    valid[:, 0] = False
    district, t = np.nonzero(valid)
    if len(t) == 0:
        raise BadInputError(f"{spec.name}: no training month has every covariate defined")

    objective = Hhh4Objective(layout, design, district, t)
    origin = str(panel.month_at(train_end))
    label = f"{spec.name}@{origin}"
    bounds = layout.bounds()
    theta = objective.initial()
    iterations, rel, f = 0, np.inf, np.inf

    for attempt in range(2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(objective, theta, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": MAX_ITER, "maxfun": 4 * MAX_ITER, "gtol": 1e-9, "ftol": 1e-15})
        iterations += int(res.nit)
        theta = res.x
        f, grad = objective(theta)
        rel = relative_gradient(_projected(grad, theta, bounds), theta, f)
        if rel <= GRADIENT_TOL:
            break
        logger.info(f"{label}: relative gradient {rel:.2e} after attempt {attempt + 1}; restarting")

    if rel > GRADIENT_TOL:
        log_fit_event(logger, spec.name, origin, "failed", {"relative_gradient": rel, "iterations": iterations})
        raise ConvergenceError(f"{label} did not reach relative gradient {GRADIENT_TOL:g} (got {rel:.2e})")

    H = approx_fprime(theta, lambda th: objective(th)[1], centered=True)
    H = 0.5 * (H + H.T)
    chol, jitter = cholesky_with_jitter(H)
    state = Hhh4State(layout, theta.copy(), chol)
    params = state.params
    diagnostics = FitDiagnostics(True, float(f), iterations, rel, {
        "psi": params.psi, "decay": params.decay, "jitter": jitter, "n_cells": int(len(t)),
        NEWEST_DATUM: max(int(t.max()), design.newest_datum(district, t)),
    })
    log_fit_event(logger, spec.name, origin, "converged", diagnostics.to_dict())
    return FittedModel(spec, panel.month_at(train_end), state, diagnostics)


def path_mean(layout: Hhh4Layout, theta: np.ndarray, design: Hhh4Design, t: int,
              y_prev: np.ndarray) -> np.ndarray:
    """(S, n) conditional mean at month t given (S, n) counts at t-1"""
    n = layout.n_districts
    district = np.arange(n)
    eta_nu, eta_lam, eta_phi = _linear_predictors(layout, theta, design, district, np.full(n, t))
    mu = _exp(eta_nu) + _exp(eta_lam) * y_prev
    if layout.has_neighbourhood:
        decay = np.exp(theta[:, layout.slices()["log_decay"]][:, 0])
        W = powerlaw_weights(design.order, decay)
        mu = mu + _exp(eta_phi) * np.einsum("sij,sj->si", W, y_prev)
    return mu


def _nb_draw(rng: np.random.Generator, mu: np.ndarray, psi: np.ndarray) -> np.ndarray:
    psi = np.broadcast_to(psi, mu.shape)
    return rng.negative_binomial(psi, psi / (psi + mu)).astype(float)


def _check_covariates(design: Hhh4Design, panel: PanelDataset, origin: int, horizon: int):
    for k in range(1, horizon + 1):
        t = origin + k
        bad = np.flatnonzero(~design.covariate_valid[:, t])
        if bad.size:
            i = int(bad[0])
            feature = design.names[int(np.argmin(design.feature_valid[i, t]))]
            logger.error(f"Missing {feature} for {panel.districts[i]} at {panel.month_at(t)}")
            raise MissingCovariateError(panel.districts[i], str(panel.month_at(t)), feature)


def forecast_design(fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> Hhh4Design:
    """Design on an axis reaching origin + horizon, with every simulated month's covariates checked"""
    train_end = panel.index_of(fitted.train_end)
    design = build_hhh4_design(fitted.spec, panel, train_end, panel.n_months + horizon)
    _check_covariates(design, panel, origin, horizon)
    return design


def forecast_reads(design: Hhh4Design, origin: int, horizon: int) -> int:
    """Newest panel month a forecast path reads: counts at the origin, covariates along the path"""
    n = design.cases.shape[0]
    steps = np.arange(origin + 1, origin + horizon + 1)
    district = np.repeat(np.arange(n), len(steps))
    return max(origin, design.newest_datum(district, np.tile(steps, n)))


def forecast_hhh4(fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                  n_samples: int, rng: np.random.Generator, degenerate: bool = False,
                  design: Optional[Hhh4Design] = None) -> np.ndarray:
    """
    (S, n) count draws at origin + horizon. Each sample path draws parameters once, then
    simulates forward, feeding sampled counts back into the autoregressive terms.
    """
    state: Hhh4State = fitted.state
    layout = state.layout
    design = design if design is not None else forecast_design(fitted, panel, origin, horizon)

    theta = state.sample(n_samples, rng, degenerate)
    psi = np.exp(theta[:, layout.slices()["log_psi"]])
    y = np.repeat(design.cases[None, :, origin], n_samples, axis=0)
    for k in range(1, horizon + 1):
        y = _nb_draw(rng, path_mean(layout, theta, design, origin + k, y), psi)
    return y


def expected_path(fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> np.ndarray:
    """(n,) mean at origin + horizon at the mode; exact because the recursion is linear in counts"""
    state: Hhh4State = fitted.state
    design = forecast_design(fitted, panel, origin, horizon)
    theta = state.theta[None, :]
    y = design.cases[None, :, origin]
    for k in range(1, horizon + 1):
        y = path_mean(state.layout, theta, design, origin + k, y)
    return y[0]


class Hhh4Model(ForecastingModel):
    family = "hhh4"

    def fit(self, spec: ModelSpec, panel: PanelDataset, train_end: int, jobs: int = 1) -> FittedModel:
        self.check_window(panel, train_end, MIN_TRAIN_MONTHS)
        return fit_hhh4(panel, spec, train_end)

    def forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int,
                 n_samples: int, rng: np.random.Generator) -> Dict[str, ForecastDistribution]:
        self.check_origin(panel, origin, horizon, fitted.spec.max_horizon)
        design = forecast_design(fitted, panel, origin, horizon)
        counts = forecast_hhh4(fitted, panel, origin, horizon, n_samples, rng, design=design)
        return to_distributions(panel, origin, horizon, counts, forecast_reads(design, origin, horizon))

    def point_forecast(self, fitted: FittedModel, panel: PanelDataset, origin: int, horizon: int) -> np.ndarray:
        return expected_path(fitted, panel, origin, horizon)
