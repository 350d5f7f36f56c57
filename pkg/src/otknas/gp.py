"""Gaussian-process surrogate over architectures.

Observations are standardized to zero mean and unit variance before
fitting; predictions are mapped back through the stored affine transform.
The kernel matrix is assembled from cached component distances, so
hyperparameter search only re-exponentiates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import SingularKernel
from .trees import TaxonomySpec
from .tw import KernelParams, PairDistanceCache, kernel_from_distances

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class HyperBounds:
    """Box constraints (linear scale, positive) for hyperparameter search."""

    lambda1: tuple = (1e-3, 1e3)
    lambda2: tuple = (1e-3, 1e3)
    lambda3: tuple = (1e-3, 1e3)
    noise_var: tuple = (1e-6, 1.0)

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "noise_var"):
            low, high = getattr(self, name)
            if not (0 < low < high):
                raise ValueError(f"{name} bounds must satisfy 0 < low < high")

    def arrays(self):
        pairs = (self.lambda1, self.lambda2, self.lambda3, self.noise_var)
        low = np.array([p[0] for p in pairs])
        high = np.array([p[1] for p in pairs])
        return low, high


@dataclass
class GpModel:
    train_x: tuple
    train_y: np.ndarray
    params: KernelParams
    ngram: int
    taxonomy: TaxonomySpec
    cache: PairDistanceCache
    y_mean: float
    y_scale: float
    y_std: np.ndarray
    dists: tuple = field(repr=False, default=None)
    kernel_mat: np.ndarray = field(repr=False, default=None)
    chol: np.ndarray = field(repr=False, default=None)
    alpha_vec: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0

    @property
    def n_train(self) -> int:
        return len(self.train_x)


def _factorize(K: np.ndarray, noise_var: float):
    """Cholesky of K + (noise + jitter) I with an escalating jitter ladder."""
    n = K.shape[0]
    for jitter in JITTER_LADDER:
        try:
            L = cholesky(
                K + (noise_var + jitter) * np.eye(n), lower=True
            )
        except np.linalg.LinAlgError:
            continue
        if jitter > 0:
            log.info("kernel factorization needed jitter %.0e", jitter)
        return L, jitter
    raise SingularKernel(
        f"factorization failed at maximum jitter {JITTER_LADDER[-1]:.0e}"
    )


def _standardize(y: np.ndarray):
    mean = float(np.mean(y)) if y.size else 0.0
    scale = float(np.std(y)) if y.size else 1.0
    if scale < 1e-12:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def fit(
    X,
    y,
    params: KernelParams,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
    cache: PairDistanceCache | None = None,
) -> GpModel:
    """Fit a GP; an empty training set yields the prior model."""
    X = tuple(X)
    y = np.asarray(y, dtype=float)
    if len(X) != y.size:
        raise ValueError("X and y must have equal length")
    cache = cache or PairDistanceCache(taxonomy, n)
    y_std, y_mean, y_scale = _standardize(y)
    model = GpModel(
        train_x=X,
        train_y=y,
        params=params,
        ngram=n,
        taxonomy=cache.taxonomy,
        cache=cache,
        y_mean=y_mean,
        y_scale=y_scale,
        y_std=y_std,
    )
    if not X:
        return model
    dists = cache.cross(list(X))
    K = kernel_from_distances(dists, params)
    L, jitter = _factorize(K, params.noise_var)
    model.dists = dists
    model.kernel_mat = K
    model.chol = L
    model.jitter = jitter
    model.alpha_vec = cho_solve((L, True), y_std)
    return model


def _cross_kernel(model: GpModel, X_star) -> np.ndarray:
    """k(X*, X) on the training set, shape (m, n_train)."""
    d = model.cache.cross(list(X_star), list(model.train_x))
    return kernel_from_distances(d, model.params)


def posterior_standardized(model: GpModel, X_star):
    """Posterior mean vector and covariance matrix on the standardized scale."""
    X_star = list(X_star)
    prior = kernel_from_distances(model.cache.cross(X_star), model.params)
    if model.n_train == 0:
        return np.zeros(len(X_star)), prior
    K_star = _cross_kernel(model, X_star)
    mean = K_star @ model.alpha_vec
    V = solve_triangular(model.chol, K_star.T, lower=True)
    cov = prior - V.T @ V
    cov = (cov + cov.T) / 2.0
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] < 0:
        w, Q = np.linalg.eigh(cov)
        cov = (Q * np.clip(w, 0.0, None)) @ Q.T
        cov = (cov + cov.T) / 2.0
    return mean, cov


def predict(model: GpModel, x_star):
    """Posterior mean and variance for one architecture (original y scale)."""
    if model.n_train == 0:
        return model.y_mean, model.y_scale**2
    K_star = _cross_kernel(model, [x_star])
    mean = float(K_star[0] @ model.alpha_vec)
    v = solve_triangular(model.chol, K_star[0], lower=True)
    var = max(1.0 - float(v @ v), 0.0)
    return model.y_mean + model.y_scale * mean, var * model.y_scale**2


def predict_batch(model: GpModel, X_star):
    """Vectorized posterior means and variances (original y scale)."""
    X_star = list(X_star)
    if model.n_train == 0:
        return (
            np.full(len(X_star), model.y_mean),
            np.full(len(X_star), model.y_scale**2),
        )
    K_star = _cross_kernel(model, X_star)
    means = K_star @ model.alpha_vec
    V = solve_triangular(model.chol, K_star.T, lower=True)
    variances = np.clip(1.0 - np.sum(V * V, axis=0), 0.0, None)
    return (
        model.y_mean + model.y_scale * means,
        variances * model.y_scale**2,
    )


def predict_cov(model: GpModel, X_star) -> np.ndarray:
    """Full posterior covariance over a candidate list (original y scale)."""
    _, cov = posterior_standardized(model, X_star)
    return cov * model.y_scale**2


def log_marginal(model: GpModel) -> float:
    """Log marginal likelihood of the standardized observations."""
    if model.chol is None:
        raise ValueError("model has no training data")
    n = model.n_train
    return float(
        -0.5 * model.y_std @ model.alpha_vec
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def lml_gradient(model: GpModel) -> np.ndarray:
    """Analytic gradient of the log marginal over (l1, l2, l3, noise_var).

    Uses dK/dlambda_i = -D_i * K elementwise and dK/dnoise = I.
    """
    if model.chol is None:
        raise ValueError("model has no training data")
    alpha = model.alpha_vec
    A_inv = cho_solve((model.chol, True), np.eye(model.n_train))
    grads = np.empty(4)
    for idx in range(3):
        dK = -model.dists[idx] * model.kernel_mat
        grads[idx] = 0.5 * (
            alpha @ dK @ alpha - np.sum(A_inv * dK)
        )
    grads[3] = 0.5 * (alpha @ alpha - np.trace(A_inv))
    return grads


def _lml_for(dists, y_std, theta: np.ndarray):
    """(lml, gradient) at linear-scale theta; None if factorization fails."""
    params = KernelParams(*theta[:3], noise_var=theta[3])
    K = kernel_from_distances(dists, params)
    try:
        L, _ = _factorize(K, params.noise_var)
    except SingularKernel:
        return None
    alpha = cho_solve((L, True), y_std)
    n = y_std.size
    value = float(
        -0.5 * y_std @ alpha
        - np.sum(np.log(np.diag(L)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    A_inv = cho_solve((L, True), np.eye(n))
    grad = np.empty(4)
    for idx in range(3):
        dK = -dists[idx] * K
        grad[idx] = 0.5 * (alpha @ dK @ alpha - np.sum(A_inv * dK))
    grad[3] = 0.5 * (alpha @ alpha - np.trace(A_inv))
    return value, grad


def optimize_hypers(
    X,
    y,
    bounds: HyperBounds | None = None,
    starts: int = 5,
    seed: int = 0,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
    cache: PairDistanceCache | None = None,
    init: KernelParams | None = None,
    max_iter: int = 100,
    grad_tol: float = 1e-6,
    trace: list | None = None,
) -> KernelParams:
    """Multi-start projected gradient ascent on the log marginal.

    Optimization runs in log-parameter space with backtracking steps;
    start points are log-uniform in the bounds (the first start is
    ``init`` when given).  The best start wins, ties broken by index.
    """
    X = tuple(X)
    y = np.asarray(y, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two observations")
    bounds = bounds or HyperBounds()
    cache = cache or PairDistanceCache(taxonomy, n)
    dists = cache.cross(list(X))
    y_std, _, _ = _standardize(y)
    low, high = bounds.arrays()
    log_low, log_high = np.log(low), np.log(high)

    rng = np.random.default_rng(seed)
    start_points = []
    if init is not None:
        theta0 = np.array(
            [init.lambda1, init.lambda2, init.lambda3, init.noise_var]
        )
        start_points.append(np.clip(np.log(np.maximum(theta0, low)), log_low, log_high))
    while len(start_points) < starts:
        start_points.append(rng.uniform(log_low, log_high))

    best = None
    for start_idx, t in enumerate(start_points):
        t = t.copy()
        state = _lml_for(dists, y_std, np.exp(t))
        if state is None:
            log.warning("hyperparameter start %d skipped (singular)", start_idx)
            continue
        value, grad = state
        step = 0.25
        for iteration in range(max_iter):
            g_log = grad * np.exp(t)
            # Project out components pushing through an active bound.
            g_proj = g_log.copy()
            g_proj[(t <= log_low + 1e-12) & (g_proj < 0)] = 0.0
            g_proj[(t >= log_high - 1e-12) & (g_proj > 0)] = 0.0
            if trace is not None:
                trace.append((start_idx, iteration, *np.exp(t), value))
            if np.linalg.norm(g_proj) < grad_tol:
                break
            accepted = False
            while step >= 1e-9:
                cand = np.clip(t + step * g_proj, log_low, log_high)
                s2 = _lml_for(dists, y_std, np.exp(cand))
                if s2 is not None and s2[0] > value:
                    t, (value, grad) = cand, s2
                    step = min(step * 1.5, 1.0)
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        if best is None or value > best[0]:
            best = (value, np.exp(t))
    if best is None:
        raise SingularKernel("all hyperparameter starts failed to factorize")
    theta = best[1]
    return KernelParams(theta[0], theta[1], theta[2], noise_var=theta[3])
