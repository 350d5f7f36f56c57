"""Candidate selection: acquisition functions, quality k-DPP sampling, and
batch strategies over a discrete pool."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import PoolTooSmall, RankDeficient, SingularConditioningBlock
from .gp import GpModel, posterior_standardized, predict_batch

RANK_TOL = 1e-10


@dataclass(frozen=True)
class QualityKernel:
    """PSD kernel over a candidate pool, reweighted by per-item quality."""

    matrix: np.ndarray
    pool: tuple


class BatchStrategy(str, Enum):
    KDPP_QUALITY = "kdpp-quality"
    KDPP_PURE = "kdpp"
    THOMPSON = "ts"
    BUCB = "bucb"


def ucb(mean: float, std: float, kappa: float) -> float:
    """Optimistic score mean + kappa * std."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    return mean + kappa * std


def ei(mean: float, std: float, best_so_far: float) -> float:
    """Expected improvement over the incumbent, for maximization."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0.0:
        return max(mean - best_so_far, 0.0)
    z = (mean - best_so_far) / std
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    return (mean - best_so_far) * cdf + std * pdf


def acquisition_scores(model: GpModel, pool, kind: str = "ucb", kappa: float = 2.0):
    """Vector of acquisition values over a candidate pool."""
    means, variances = predict_batch(model, pool)
    stds = np.sqrt(variances)
    if kind == "ucb":
        return means + kappa * stds
    if kind == "ei":
        best = float(np.max(model.train_y)) if model.n_train else 0.0
        return np.array([ei(m, s, best) for m, s in zip(means, stds)])
    raise ValueError(f"unknown acquisition kind {kind!r}")


def argmax_acquisition(model: GpModel, pool, kind: str = "ucb", kappa: float = 2.0):
    """Pool member maximizing the acquisition; ties go to the lowest index."""
    pool = list(pool)
    if not pool:
        raise PoolTooSmall("empty candidate pool")
    scores = acquisition_scores(model, pool, kind, kappa)
    return pool[int(np.argmax(scores))]


def quality_kernel(model: GpModel, pool, sign: int = 1) -> QualityKernel:
    """Posterior covariance scaled by exp(sign * posterior mean) per item.

    The mean enters on the standardized scale.  sign=+1 makes quality grow
    with the predicted score; sign=-1 flips the preference.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    pool = tuple(pool)
    if not pool:
        raise PoolTooSmall("empty candidate pool")
    mu, cov = posterior_standardized(model, pool)
    q = np.exp(sign * mu)
    return QualityKernel(q[:, None] * cov * q[None, :], pool)


def _elementary_symmetric(lam: np.ndarray, k: int) -> np.ndarray:
    """Table E[i, j] = e_j(lam[:i]) for j <= k."""
    n = lam.size
    E = np.zeros((n + 1, k + 1))
    E[:, 0] = 1.0
    for i in range(1, n + 1):
        for j in range(1, min(i, k) + 1):
            E[i, j] = E[i - 1, j] + lam[i - 1] * E[i - 1, j - 1]
    return E


def sample_kdpp(K, b: int, seed: int = 0):
    """Exact k-DPP sample of ``b`` indices, deterministic given the seed.

    Eigendecomposes the kernel, picks an elementary DPP of size ``b`` with
    probability proportional to products of eigenvalues, then samples the
    items by iterative projection.  Returns a sorted index list.
    """
    M = K.matrix if isinstance(K, QualityKernel) else np.asarray(K, dtype=float)
    if b < 1:
        raise ValueError("batch size must be >= 1")
    M = (M + M.T) / 2.0
    lam, vecs = np.linalg.eigh(M)
    lam = np.clip(lam, 0.0, None)
    rank = int(np.sum(lam > RANK_TOL))
    if b > rank:
        raise RankDeficient(b, rank)

    rng = np.random.default_rng(seed)
    E = _elementary_symmetric(lam, b)
    chosen_vecs = []
    remaining = b
    for i in range(lam.size, 0, -1):
        if remaining == 0:
            break
        if E[i, remaining] <= 0:
            continue
        p = lam[i - 1] * E[i - 1, remaining - 1] / E[i, remaining]
        if rng.random() < p:
            chosen_vecs.append(i - 1)
            remaining -= 1
    V = vecs[:, chosen_vecs]

    items = []
    for _ in range(b):
        probs = np.sum(V * V, axis=1)
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        i = int(rng.choice(probs.size, p=probs))
        items.append(i)
        if V.shape[1] > 1:
            j = int(np.argmax(np.abs(V[i])))
            V = V - np.outer(V[:, j], V[i] / V[i, j])
            V = np.delete(V, j, axis=1)
            V, _ = np.linalg.qr(V)
        else:
            V = np.zeros((V.shape[0], 0))
    return sorted(items)


def conditional_kernel(K_full, cond) -> np.ndarray:
    """Schur complement of the conditioning block: kernel of the complement."""
    K = np.asarray(K_full, dtype=float)
    cond = sorted(set(int(i) for i in cond))
    rest = [i for i in range(K.shape[0]) if i not in cond]
    if not cond:
        return K.copy()
    K_a = K[np.ix_(cond, cond)]
    K_ba = K[np.ix_(rest, cond)]
    for jitter in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            L = cholesky(K_a + jitter * np.eye(len(cond)), lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise SingularConditioningBlock(
            f"conditioning block of size {len(cond)} is singular"
        )
    solved = cho_solve((L, True), K_ba.T)
    out = K[np.ix_(rest, rest)] - K_ba @ solved
    return (out + out.T) / 2.0


def _thompson_indices(model, pool, b, rng):
    mu, cov = posterior_standardized(model, pool)
    L = cholesky(cov + 1e-8 * np.eye(len(pool)), lower=True)
    chosen = []
    sample = mu
    attempts = 0
    while len(chosen) < b and attempts < 10 * b:
        sample = mu + L @ rng.standard_normal(len(pool))
        attempts += 1
        i = int(np.argmax(sample))
        if i not in chosen:
            chosen.append(i)
    if len(chosen) < b:
        for i in np.argsort(-sample):
            if int(i) not in chosen:
                chosen.append(int(i))
            if len(chosen) == b:
                break
    return chosen


def _bucb_indices(model, pool, b, kappa):
    mu, cov = posterior_standardized(model, pool)
    cov = cov.copy()
    noise = model.params.noise_var
    chosen = []
    for _ in range(b):
        std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        score = mu + kappa * std
        score[chosen] = -np.inf
        i = int(np.argmax(score))
        chosen.append(i)
        # Hallucinate the posterior mean: variance shrinks, mean unchanged.
        denom = cov[i, i] + noise + 1e-12
        cov = cov - np.outer(cov[:, i], cov[i]) / denom
    return chosen


def batch_select(
    model: GpModel,
    pool,
    strategy,
    b: int,
    kappa: float = 2.0,
    seed: int = 0,
    quality_sign: int = 1,
):
    """Select ``b`` distinct pool members under the given batch strategy."""
    pool = list(pool)
    if len(pool) < b:
        raise PoolTooSmall(f"pool of {len(pool)} cannot fill a batch of {b}")
    strategy = BatchStrategy(strategy)
    rng = np.random.default_rng(seed)
    if strategy is BatchStrategy.KDPP_QUALITY:
        qk = quality_kernel(model, pool, sign=quality_sign)
        idx = sample_kdpp(qk, b, seed=rng.integers(2**32))
    elif strategy is BatchStrategy.KDPP_PURE:
        _, cov = posterior_standardized(model, pool)
        idx = sample_kdpp(cov, b, seed=rng.integers(2**32))
    elif strategy is BatchStrategy.THOMPSON:
        idx = _thompson_indices(model, pool, b, rng)
    elif strategy is BatchStrategy.BUCB:
        idx = _bucb_indices(model, pool, b, kappa)
    else:  # pragma: no cover
        raise ValueError(strategy)
    return [pool[i] for i in idx]
