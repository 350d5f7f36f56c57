"""Tree-Wasserstein distances, the combined architecture discrepancy, and
the exponential kernel built on it.

The closed form sums, over tree edges, the edge weight times the absolute
difference of the two subtree masses.  An exact transportation-simplex
solver is included as an independent oracle for verification.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from .arch import (
    Architecture,
    EmpiricalMeasure,
    canonical_key,
    degree_measures,
    ngram_measure,
)
from .errors import DimensionMismatch, EmptyMeasure
from .trees import (
    MetricTree,
    TaxonomySpec,
    build_operation_tree,
    chain_tree,
    default_taxonomy,
    subtree_masses,
)


@dataclass(frozen=True)
class DistanceWeights:
    """Convex-combination weights for the three distance components."""

    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (0.0 <= self.alpha1 <= 1.0 and 0.0 <= self.alpha2 <= 1.0):
            raise ValueError("alpha1 and alpha2 must lie in [0, 1]")
        if self.alpha1 + self.alpha2 > 1.0 + 1e-12:
            raise ValueError("alpha1 + alpha2 must not exceed 1")

    @property
    def alpha3(self) -> float:
        return 1.0 - self.alpha1 - self.alpha2


@dataclass(frozen=True)
class KernelParams:
    """Per-component inverse length scales plus observation noise."""

    lambda1: float
    lambda2: float
    lambda3: float
    noise_var: float = 1e-6

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "noise_var"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def lambdas(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3])


def tw_distance(
    tree: MetricTree, mu: EmpiricalMeasure, nu: EmpiricalMeasure
) -> float:
    """Closed-form tree-Wasserstein distance between two measures."""
    a = subtree_masses(tree, mu)
    b = subtree_masses(tree, nu)
    return float(np.sum(tree.weight[1:] * np.abs(a[1:] - b[1:])))


def ot_oracle(cost, mu, nu) -> float:
    """Exact 1-Wasserstein value by the transportation simplex.

    Anti-cycling uses Bland's rule (first negative reduced cost in
    row-major order; lexicographically smallest leaving arc).  Intended
    for small instances; this is a verification oracle, not a hot path.
    """
    cost_m = np.asarray(cost, dtype=float)
    a = np.asarray(mu, dtype=float)
    b = np.asarray(nu, dtype=float)
    if cost_m.ndim != 2 or cost_m.shape != (a.size, b.size):
        raise DimensionMismatch(
            f"cost is {cost_m.shape}, expected {(a.size, b.size)}"
        )
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("weight vectors must each sum to 1")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("weights must be nonnegative")
    m, n = cost_m.shape

    # Northwest-corner initial basis (m + n - 1 arcs, possibly degenerate).
    flow = {}
    basis = []
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        t = min(ra[i], rb[j])
        flow[(i, j)] = t
        basis.append((i, j))
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        else:
            j += 1

    for _ in range(20000):
        # Basis arcs form a spanning tree on rows + columns; solve potentials.
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        row_arcs = [[] for _ in range(m)]
        col_arcs = [[] for _ in range(n)]
        for (bi, bj) in basis:
            row_arcs[bi].append(bj)
            col_arcs[bj].append(bi)
        u[0] = 0.0
        queue = deque([("r", 0)])
        while queue:
            kind, k = queue.popleft()
            if kind == "r":
                for bj in row_arcs[k]:
                    if np.isnan(v[bj]):
                        v[bj] = cost_m[k, bj] - u[k]
                        queue.append(("c", bj))
            else:
                for bi in col_arcs[k]:
                    if np.isnan(u[bi]):
                        u[bi] = cost_m[bi, k] - v[k]
                        queue.append(("r", bi))

        reduced = cost_m - u[:, None] - v[None, :]
        negative = np.flatnonzero(reduced.ravel() < -1e-12)
        if negative.size == 0:
            break
        enter = divmod(int(negative[0]), n)

        # Unique cycle: path from the entering row to the entering column.
        prev = {}
        start, goal = ("r", enter[0]), ("c", enter[1])
        queue = deque([start])
        prev[start] = None
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            kind, k = node
            nbrs = (
                [("c", bj) for bj in row_arcs[k]]
                if kind == "r"
                else [("r", bi) for bi in col_arcs[k]]
            )
            for nxt in nbrs:
                if nxt not in prev:
                    prev[nxt] = node
                    queue.append(nxt)
        path = []
        node = goal
        while node is not None:
            path.append(node)
            node = prev[node]
        # path runs goal -> start; consecutive nodes identify basis arcs.
        minus, plus = [], []
        for idx in range(len(path) - 1):
            x, y = path[idx], path[idx + 1]
            arc = (x[1], y[1]) if x[0] == "r" else (y[1], x[1])
            (minus if idx % 2 == 0 else plus).append(arc)

        theta = min(flow[arc] for arc in minus)
        leaving = min(arc for arc in minus if flow[arc] == theta)
        flow[enter] = flow.get(enter, 0.0) + theta
        for arc in plus:
            flow[arc] += theta
        for arc in minus:
            flow[arc] -= theta
        basis.remove(leaving)
        del flow[leaving]
        basis.append(enter)
    else:
        raise RuntimeError("transportation simplex failed to converge")

    return float(sum(cost_m[arc] * t for arc, t in flow.items()))


def op_measure_at_order(x: Architecture, n: int, vocab) -> EmpiricalMeasure:
    """Operation measure on the order-n atom space, total over architectures.

    An architecture without interior n-paths falls back to its largest
    available lower-order measure, embedded at diagonal atoms by repeating
    the final token (so a single operation ``a`` contributes to ``(a, a)``
    at order 2).  Keeping the map per-architecture rather than per-pair
    preserves negative definiteness of the resulting transport distance.
    """
    for order in range(n, 0, -1):
        try:
            measure = ngram_measure(x, order, vocab)
        except EmptyMeasure:
            continue
        if order == n:
            return measure
        support = tuple(
            atom + (atom[-1],) * (n - order) for atom in measure.support
        )
        return EmpiricalMeasure(support, measure.weights)
    raise EmptyMeasure("architecture has no interior nodes")


def component_distances(
    x: Architecture,
    z: Architecture,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
):
    """The three tree-Wasserstein components (operations, indegree, outdegree)."""
    taxonomy = taxonomy or default_taxonomy()
    vocab = taxonomy.leaf_labels()
    mu = op_measure_at_order(x, n, vocab)
    nu = op_measure_at_order(z, n, vocab)
    op_tree = build_operation_tree(taxonomy, n)
    d_op = tw_distance(op_tree, mu, nu)

    x_in, x_out = degree_measures(x)
    z_in, z_out = degree_measures(z)

    def chain_tw(ma, mb):
        supports = sorted(set(ma.support) | set(mb.support))
        tree = chain_tree(supports)
        return tw_distance(tree, ma, mb)

    return d_op, chain_tw(x_in, z_in), chain_tw(x_out, z_out)


def d_nn(
    x: Architecture,
    z: Architecture,
    w: DistanceWeights,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
) -> float:
    """Convex combination of the three component distances."""
    d_op, d_in, d_out = component_distances(x, z, n, taxonomy)
    return w.alpha1 * d_op + w.alpha2 * d_in + w.alpha3 * d_out


def kernel(
    x: Architecture,
    z: Architecture,
    p: KernelParams,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
) -> float:
    """exp of the negatively weighted component distances; 1 iff all are 0."""
    d_op, d_in, d_out = component_distances(x, z, n, taxonomy)
    return float(
        np.exp(-p.lambda1 * d_op - p.lambda2 * d_in - p.lambda3 * d_out)
    )


class PairDistanceCache:
    """Component distances cached per (canonical key pair, n-gram order).

    Per-architecture features (operation-tree subtree-mass vector and
    degree CDFs) are computed once; pair values are memoized so
    hyperparameter search re-exponentiates cached distances instead of
    recomputing transport.  Insert-or-get is guarded by a lock and writes
    are idempotent, so concurrent use is safe.
    """

    def __init__(self, taxonomy: TaxonomySpec | None = None, n: int = 1):
        self.taxonomy = taxonomy or default_taxonomy()
        self.n = int(n)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        self.vocab = self.taxonomy.leaf_labels()
        self._trees = {self.n: build_operation_tree(self.taxonomy, self.n)}
        self._arch: dict = {}
        self._pairs: dict = {}
        self._lock = threading.Lock()

    def _features(self, arch: Architecture):
        key = canonical_key(arch)
        feats = self._arch.get(key)
        if feats is not None:
            return key, feats
        mu = op_measure_at_order(arch, self.n, self.vocab)
        op_vec = subtree_masses(self._trees[self.n], mu)
        m_in, m_out = degree_measures(arch)

        def cdf(measure):
            atoms = tuple(measure.support)
            return atoms, np.cumsum(measure.weight_array())

        feats = (op_vec, cdf(m_in), cdf(m_out))
        with self._lock:
            self._arch.setdefault(key, feats)
        return key, feats

    @staticmethod
    def _cdf_distance(fa, fb):
        atoms_a, cum_a = fa
        atoms_b, cum_b = fb
        grid = sorted(set(atoms_a) | set(atoms_b))
        if len(grid) == 1:
            return 0.0
        gaps = np.array(
            [float(b - a) for a, b in zip(grid, grid[1:])], dtype=float
        )
        ga = np.array([float(v) for v in grid[:-1]])
        pa = np.array([float(v) for v in atoms_a])
        pb = np.array([float(v) for v in atoms_b])
        fa_vals = np.concatenate([[0.0], cum_a])[
            np.searchsorted(pa, ga, side="right")
        ]
        fb_vals = np.concatenate([[0.0], cum_b])[
            np.searchsorted(pb, ga, side="right")
        ]
        return float(np.sum(gaps * np.abs(fa_vals - fb_vals)))

    def pair(self, x: Architecture, z: Architecture):
        """(operation, indegree, outdegree) distances for one pair."""
        kx, fx = self._features(x)
        kz, fz = self._features(z)
        cache_key = (kx, kz) if kx <= kz else (kz, kx)
        hit = self._pairs.get(cache_key)
        if hit is not None:
            return hit
        op_x, in_x, out_x = fx
        op_z, in_z, out_z = fz
        w = self._trees[self.n].weight
        d_op = float(np.sum(w[1:] * np.abs(op_x[1:] - op_z[1:])))
        out = (
            d_op,
            self._cdf_distance(in_x, in_z),
            self._cdf_distance(out_x, out_z),
        )
        with self._lock:
            self._pairs.setdefault(cache_key, out)
        return out

    def cross(self, xs, zs=None):
        """Three |xs| x |zs| component-distance matrices."""
        zs = xs if zs is None else zs
        shape = (len(xs), len(zs))
        mats = tuple(np.zeros(shape) for _ in range(3))
        symmetric = zs is xs
        for i, x in enumerate(xs):
            start = i if symmetric else 0
            for j in range(start, len(zs)):
                triple = self.pair(x, zs[j])
                for k in range(3):
                    mats[k][i, j] = triple[k]
                    if symmetric:
                        mats[k][j, i] = triple[k]
        return mats


def kernel_matrix(
    X,
    p: KernelParams,
    n: int = 1,
    taxonomy: TaxonomySpec | None = None,
    cache: PairDistanceCache | None = None,
) -> np.ndarray:
    """Symmetric unit-diagonal kernel matrix over a list of architectures."""
    if not X:
        raise ValueError("X must be nonempty")
    cache = cache or PairDistanceCache(taxonomy, n)
    d_op, d_in, d_out = cache.cross(list(X))
    return kernel_from_distances((d_op, d_in, d_out), p)


def kernel_from_distances(dists, p: KernelParams) -> np.ndarray:
    d_op, d_in, d_out = dists
    return np.exp(
        -p.lambda1 * d_op - p.lambda2 * d_in - p.lambda3 * d_out
    )
