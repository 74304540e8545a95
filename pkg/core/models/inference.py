"""
MAP + Laplace inference for Poisson latent Gaussian models

log mu = offset + X beta + sum_b (D_b(h_b) xi_b)[level_b]
beta ~ N(0, s^2) (intercept sd 5, others sd 1), xi ~ N(0, I), h with block priors.
The mode is found jointly by L-BFGS-B with analytic gradients, then polished
by Newton steps on (beta, xi). The Gaussian approximation over (beta, xi) at the
hyperparameter mode comes from the exact Hessian J^T W J + prior.
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from core.errors import ConvergenceError, SingularSystemError, SpecError
from core.models.effects import EffectBlock
from utils.logger import setup_logger

logger = setup_logger("inference")

INTERCEPT_PRIOR_SD = 5.0
COEF_PRIOR_SD = 1.0
GRADIENT_TOL = 1e-5
MAX_ITER = 500
NEWTON_STEPS = 20
JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
ETA_CLIP = 30.0


def relative_gradient(grad: np.ndarray, theta: np.ndarray, f: float) -> float:
    """max_j |g_j| * max(|theta_j|, 1) / max(|f|, 1)"""
    if grad.size == 0:
        return 0.0
    return float(np.max(np.abs(grad) * np.maximum(np.abs(theta), 1.0)) / max(abs(f), 1.0))


def cholesky_with_jitter(H: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of H, adding diagonal jitter if needed"""
    scale = max(float(np.max(np.abs(np.diag(H)))), 1.0)
    for jitter in JITTER_STEPS:
        try:
            L = np.linalg.cholesky(H + jitter * scale * np.eye(len(H)))
            if jitter > 0:
                logger.warning(f"Hessian needed jitter {jitter:g} to factorize")
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError("Posterior Hessian singular after jitter retries")


@dataclass
class LaplaceFit:
    """Mode and Gaussian approximation of a latent Gaussian model"""
    beta: np.ndarray
    latents: List[np.ndarray]
    hypers: List[np.ndarray]
    chol: np.ndarray
    converged: bool
    objective: float
    iterations: int
    gradient_norm: float
    jitter: float = 0.0

    @property
    def mode(self) -> np.ndarray:
        return np.concatenate([self.beta, *self.latents])

    def covariance(self) -> np.ndarray:
        """Posterior covariance of (beta, xi) from the Cholesky factor of the precision"""
        inv_L = solve_triangular(self.chol, np.eye(len(self.chol)), lower=True)
        return inv_L.T @ inv_L

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, dim) draws of (beta, xi)"""
        z = rng.standard_normal((len(self.chol), n))
        return (self.mode[:, None] + solve_triangular(self.chol, z, lower=True, trans="T")).T

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "latents": [x.tolist() for x in self.latents],
            "hypers": [h.tolist() for h in self.hypers],
            "chol": self.chol.tolist(),
            "converged": self.converged,
            "objective": self.objective,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LaplaceFit":
        return cls(
            beta=np.asarray(data["beta"], dtype=float),
            latents=[np.asarray(x, dtype=float) for x in data["latents"]],
            hypers=[np.asarray(h, dtype=float) for h in data["hypers"]],
            chol=np.asarray(data["chol"], dtype=float),
            converged=bool(data["converged"]),
            objective=float(data["objective"]),
            iterations=int(data["iterations"]),
            gradient_norm=float(data["gradient_norm"]),
            jitter=float(data.get("jitter", 0.0)),
        )


class LatentGaussianModel:
    """Poisson regression with Gaussian random-effect blocks"""

    def __init__(self, y: np.ndarray, X: np.ndarray, offset: np.ndarray,
                 blocks: Sequence[EffectBlock], block_levels: Sequence[np.ndarray],
                 prior_sd: Optional[np.ndarray] = None):
        """
        Initialize the model

        Args:
            y: observed counts (m,)
            X: fixed-effect design (m, p); column 0 is the intercept when present
            offset: known log-mean offset (m,)
            blocks: random-effect blocks
            block_levels: level index per observation for each block
            prior_sd: prior sd of each fixed effect (defaults: intercept 5, others 1)
        """
        self.y = np.asarray(y, dtype=float)
        self.X = np.asarray(X, dtype=float).reshape(len(self.y), -1)
        self.offset = np.asarray(offset, dtype=float)
        self.blocks = list(blocks)
        self.block_levels = [np.asarray(l, dtype=int) for l in block_levels]
        if len(self.blocks) != len(self.block_levels):
            raise SpecError("Each effect block needs its level index")
        for block, levels in zip(self.blocks, self.block_levels):
            if levels.shape != self.y.shape or levels.min(initial=0) < 0 or \
                    levels.max(initial=0) >= block.n_levels:
                raise SpecError(f"Level index of {block.name} does not match the observations")
        if len(self.y) == 0:
            raise SpecError("No observations to fit")

        p = self.X.shape[1]
        if prior_sd is None:
            prior_sd = np.full(p, COEF_PRIOR_SD)
            if p:
                prior_sd[0] = INTERCEPT_PRIOR_SD
        self.prior_prec = 1.0 / np.asarray(prior_sd, dtype=float) ** 2

        self.n_beta = p
        self.latent_sizes = [b.n_latent for b in self.blocks]
        self.hyper_sizes = [b.n_hyper for b in self.blocks]
        self.n_latent = int(sum(self.latent_sizes))
        self.n_hyper = int(sum(self.hyper_sizes))

    # packing

    def unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        k = self.n_beta
        beta = theta[:k]
        latents, hypers = [], []
        for q in self.latent_sizes:
            latents.append(theta[k:k + q])
            k += q
        for r in self.hyper_sizes:
            hypers.append(theta[k:k + r])
            k += r
        return beta, latents, hypers

    def pack(self, beta, latents, hypers) -> np.ndarray:
        return np.concatenate([np.asarray(beta, dtype=float), *latents, *hypers])

    def initial(self) -> np.ndarray:
        beta = np.zeros(self.n_beta)
        if self.n_beta:
            rate = (self.y.sum() + 0.5) / np.exp(self.offset).sum()
            beta[0] = np.clip(np.log(rate), -5 * INTERCEPT_PRIOR_SD, 5 * INTERCEPT_PRIOR_SD)
        latents = [np.zeros(q) for q in self.latent_sizes]
        hypers = [b.hyper_init() for b in self.blocks]
        return self.pack(beta, latents, hypers)

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        free = [(None, None)] * (self.n_beta + self.n_latent)
        return free + [bd for b in self.blocks for bd in b.hyper_bounds()]

    # objective

    def linear_predictor(self, beta, latents, hypers, matrices=None) -> np.ndarray:
        eta = self.offset + self.X @ beta
        for k, (block, xi, h) in enumerate(zip(self.blocks, latents, hypers)):
            D = block.matrix(h) if matrices is None else matrices[k]
            eta = eta + (D @ xi)[self.block_levels[k]]
        return eta

    def objective(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        """Negative log posterior (up to a constant) and its gradient"""
        beta, latents, hypers = self.unpack(theta)
        matrices = [b.matrix(h) for b, h in zip(self.blocks, hypers)]
        eta = np.clip(self.linear_predictor(beta, latents, hypers, matrices), -ETA_CLIP, ETA_CLIP)
        mu = np.exp(eta)

        f = float(np.sum(mu - self.y * eta))
        f += 0.5 * float(np.sum(self.prior_prec * beta ** 2))
        r = mu - self.y

        g_beta = self.X.T @ r + self.prior_prec * beta
        g_latent, g_hyper = [], []
        for k, (block, xi, h, D) in enumerate(zip(self.blocks, latents, hypers, matrices)):
            f += 0.5 * float(xi @ xi)
            r_levels = np.bincount(self.block_levels[k], weights=r, minlength=block.n_levels)
            g_latent.append(D.T @ r_levels + xi)
            pen, pen_grad = block.hyper_penalty(h)
            f += pen
            g_hyper.append(np.array([r_levels @ (dD @ xi) for dD in block.matrix_grads(h)]) + pen_grad)

        grad = np.concatenate([g_beta, *g_latent, *g_hyper])
        return f, grad

    # Laplace pieces

    def jacobian(self, hypers: List[np.ndarray]) -> np.ndarray:
        """d eta / d(beta, xi), shape (m, p + q)"""
        cols = [self.X]
        for k, (block, h) in enumerate(zip(self.blocks, hypers)):
            cols.append(block.matrix(h)[self.block_levels[k]])
        return np.hstack(cols)

    def prior_precision(self) -> np.ndarray:
        return np.concatenate([self.prior_prec, np.ones(self.n_latent)])

    def latent_hessian(self, beta, latents, hypers) -> Tuple[np.ndarray, np.ndarray]:
        J = self.jacobian(hypers)
        eta = np.clip(self.linear_predictor(beta, latents, hypers), -ETA_CLIP, ETA_CLIP)
        mu = np.exp(eta)
        H = (J * mu[:, None]).T @ J + np.diag(self.prior_precision())
        return H, J

    def _newton_polish(self, theta: np.ndarray) -> np.ndarray:
        """Newton steps on (beta, xi) at fixed hyperparameters, with step halving"""
        beta, latents, hypers = self.unpack(theta)
        z = np.concatenate([beta, *latents])
        n_z = len(z)
        f_old, _ = self.objective(theta)
        for _ in range(NEWTON_STEPS):
            H, _ = self.latent_hessian(*self.unpack(theta))
            _, grad = self.objective(theta)
            g = grad[:n_z]
            try:
                step = cho_solve(cho_factor(H), g)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1e-6:
                trial = theta.copy()
                trial[:n_z] = theta[:n_z] - t * step
                f_new, _ = self.objective(trial)
                if f_new <= f_old:
                    break
                t *= 0.5
            if t <= 1e-6:
                break
            theta = trial
            if f_old - f_new < 1e-12 * max(abs(f_old), 1.0):
                f_old = f_new
                break
            f_old = f_new
        return theta

    def fit(self, theta0: Optional[np.ndarray] = None, label: str = "model") -> LaplaceFit:
        """Find the posterior mode and build the Gaussian approximation"""
        theta = self.initial() if theta0 is None else np.asarray(theta0, dtype=float)
        bounds = self.bounds()
        iterations = 0
        rel = np.inf
        f = np.inf

        for attempt in range(2):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(self.objective, theta, jac=True, method="L-BFGS-B", bounds=bounds,
                               options={"maxiter": MAX_ITER, "maxfun": 4 * MAX_ITER,
                                        "gtol": 1e-9, "ftol": 1e-14})
            iterations += int(res.nit)
            theta = self._newton_polish(res.x)
            f, grad = self.objective(theta)
            rel = relative_gradient(_projected(grad, theta, bounds), theta, f)
            if rel <= GRADIENT_TOL:
                break
            logger.info(f"{label}: relative gradient {rel:.2e} after attempt {attempt + 1}; restarting")

        converged = rel <= GRADIENT_TOL
        if not converged:
            logger.error(f"{label}: no convergence, relative gradient {rel:.2e} after {iterations} iterations")
            raise ConvergenceError(
                f"{label} did not reach relative gradient {GRADIENT_TOL:g} (got {rel:.2e})"
            )

        beta, latents, hypers = self.unpack(theta)
        H, _ = self.latent_hessian(beta, latents, hypers)
        L, jitter = cholesky_with_jitter(H)
        return LaplaceFit(
            beta=beta.copy(),
            latents=[x.copy() for x in latents],
            hypers=[h.copy() for h in hypers],
            chol=L,
            converged=True,
            objective=float(f),
            iterations=iterations,
            gradient_norm=rel,
            jitter=jitter,
        )


def _projected(grad: np.ndarray, theta: np.ndarray, bounds) -> np.ndarray:
    """Zero gradient components pushing against an active bound"""
    g = grad.copy()
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None and theta[j] <= lo + 1e-10 and g[j] > 0:
            g[j] = 0.0
        if hi is not None and theta[j] >= hi - 1e-10 and g[j] < 0:
            g[j] = 0.0
    return g


def sample_effects(blocks: Sequence[EffectBlock], hypers: Sequence[np.ndarray],
                   latent_draws: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Effect values over fitted levels for each block; each draw array is (S, q_b)"""
    return [draws @ block.matrix(h).T for block, h, draws in zip(blocks, hypers, latent_draws)]


def split_draws(fit: LaplaceFit, draws: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Split (S, p + q) draws into beta draws and per-block latent draws"""
    p = len(fit.beta)
    beta = draws[:, :p]
    out, k = [], p
    for x in fit.latents:
        out.append(draws[:, k:k + len(x)])
        k += len(x)
    return beta, out


def laplace_draws(fit: LaplaceFit, n: int, rng: np.random.Generator,
                  degenerate: bool = False) -> np.ndarray:
    """Parameter draws; degenerate=True repeats the mode"""
    if degenerate:
        return np.repeat(fit.mode[None, :], n, axis=0)
    return fit.sample(n, rng)


@dataclass(frozen=True)
class Cells:
    """District, calendar year and month of year for a set of panel cells"""
    district: np.ndarray
    year: np.ndarray
    month: np.ndarray

    def __len__(self) -> int:
        return len(self.district)

    @classmethod
    def from_panel(cls, panel, district: np.ndarray, t: np.ndarray) -> "Cells":
        """Cells for (district index, month index) pairs; months may run past the panel end"""
        t = np.asarray(t, dtype=int)
        years, months = panel.calendar(int(t.max()) + 1)
        return cls(np.asarray(district, dtype=int), years[t], months[t])


def grid_index(n_districts: int, t: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """District-major (district, month) index pairs over all districts and the given months"""
    t = np.asarray(t, dtype=int)
    return np.repeat(np.arange(n_districts), len(t)), np.tile(t, n_districts)


@dataclass
class LatentState:
    """Fitted state of a latent Gaussian model: coefficient names, blocks, fit, scaling"""
    coef_names: List[str]
    blocks: List[EffectBlock]
    fit: LaplaceFit
    scaling: Dict[str, List[float]] = field(default_factory=dict)

    def coefficients(self) -> Dict[str, float]:
        return dict(zip(self.coef_names, self.fit.beta.tolist()))

    def effect_values(self) -> List[np.ndarray]:
        """Effect values over each block's levels at the mode"""
        return [b.matrix(h) @ x for b, h, x in zip(self.blocks, self.fit.hypers, self.fit.latents)]

    def hyper_summary(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for block, h in zip(self.blocks, self.fit.hypers):
            out.update(block.summary(h))
        return out

    def to_dict(self) -> dict:
        return {
            "coef_names": list(self.coef_names),
            "blocks": [b.to_dict() for b in self.blocks],
            "fit": self.fit.to_dict(),
            "scaling": {k: list(v) for k, v in self.scaling.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatentState":
        from core.models.effects import block_from_dict

        return cls(
            coef_names=list(data["coef_names"]),
            blocks=[block_from_dict(b) for b in data["blocks"]],
            fit=LaplaceFit.from_dict(data["fit"]),
            scaling={k: list(v) for k, v in data.get("scaling", {}).items()},
        )


def fit_latent(y: np.ndarray, X: np.ndarray, offset: np.ndarray, blocks: Sequence[EffectBlock],
               cells: Cells, label: str) -> LaplaceFit:
    """Build the level indices for each block and fit the model"""
    levels = [b.levels(cells.district, cells.year, cells.month) for b in blocks]
    model = LatentGaussianModel(y, X, offset, blocks, levels)
    return model.fit(label=label)


def latent_linear_predictor(state: LatentState, X: np.ndarray, offset: np.ndarray, cells: Cells,
                            n_samples: int, rng: np.random.Generator,
                            degenerate: bool = False) -> np.ndarray:
    """(S, cells) draws of the log mean from the Gaussian approximation"""
    fit = state.fit
    draws = laplace_draws(fit, n_samples, rng, degenerate)
    beta, latent_draws = split_draws(fit, draws)
    eta = offset[None, :] + beta @ X.T
    values = sample_effects(state.blocks, fit.hypers, latent_draws)
    for block, h, v in zip(state.blocks, fit.hypers, values):
        eta = eta + block.extend(h, v, cells.district, cells.year, cells.month, rng)
    return eta


def forecast_latent(state: LatentState, X: np.ndarray, offset: np.ndarray, cells: Cells,
                    n_samples: int, rng: np.random.Generator, degenerate: bool = False) -> np.ndarray:
    """(S, cells) Poisson count draws: parameters from the Laplace Gaussian, then observations"""
    eta = latent_linear_predictor(state, X, offset, cells, n_samples, rng, degenerate)
    return rng.poisson(np.exp(np.clip(eta, -ETA_CLIP, ETA_CLIP)))


def mode_linear_predictor(state: LatentState, X: np.ndarray, offset: np.ndarray, cells: Cells) -> np.ndarray:
    """Log mean at the posterior mode; effects past the fitted range take their conditional mean"""
    fit = state.fit
    eta = offset + X @ fit.beta
    for block, h, v in zip(state.blocks, fit.hypers, state.effect_values()):
        eta = eta + block.extend_mean(h, v, cells.district, cells.year, cells.month)
    return eta
