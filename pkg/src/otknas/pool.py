"""Evolutionary generation of candidate pools.

Candidates are produced by mutating acquisition-weighted seeds drawn from
the evaluated archive; validity is maintained by a chain-insertion repair
that guarantees an input-to-output path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .arch import INPUT, OUTPUT, Architecture, canonical_key, validate
from .gp import GpModel
from .select import acquisition_scores


@dataclass(frozen=True)
class SpaceSpec:
    """Bounds of the search space: vocabulary and graph size limits."""

    vocab: tuple
    max_nodes: int
    max_edges: int
    min_nodes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if not self.vocab:
            raise ValueError("vocabulary must be nonempty")
        if not 2 <= self.min_nodes <= self.max_nodes:
            raise ValueError("need 2 <= min_nodes <= max_nodes")
        if self.max_edges < self.max_nodes - 1:
            raise ValueError("max_edges must allow a full chain")


class Mutation(str, Enum):
    CHANGE_OP = "change-op"
    ADD_NODE = "add-node"
    REMOVE_NODE = "remove-node"
    ADD_EDGE = "add-edge"
    REMOVE_EDGE = "remove-edge"


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _repair(adj: np.ndarray) -> np.ndarray:
    """Give every non-input node an in-edge and every non-output an out-edge
    by inserting chain edges; keeps the matrix strictly upper triangular."""
    adj = adj.copy()
    n = adj.shape[0]
    for j in range(1, n):
        if not adj[:j, j].any():
            adj[j - 1, j] = True
    for i in range(n - 1):
        if not adj[i, i + 1 :].any():
            adj[i, i + 1] = True
    return adj


def _removable_edges(adj: np.ndarray):
    """Edges whose removal keeps every node repaired (degree >= 1)."""
    n = adj.shape[0]
    indeg = adj.sum(axis=0)
    outdeg = adj.sum(axis=1)
    out = []
    for i, j in zip(*np.nonzero(adj)):
        if indeg[j] >= 2 and outdeg[i] >= 2:
            out.append((int(i), int(j)))
    return out


def _cap_edges(adj: np.ndarray, max_edges: int, rng) -> np.ndarray:
    adj = adj.copy()
    while adj.sum() > max_edges:
        removable = _removable_edges(adj)
        if not removable:
            break
        i, j = removable[rng.integers(len(removable))]
        adj[i, j] = False
    return adj


def random_architecture(space: SpaceSpec, seed) -> Architecture:
    """Random valid DAG: uniform node count, random edges, chain repair."""
    rng = _rng(seed)
    n = int(rng.integers(space.min_nodes, space.max_nodes + 1))
    adj = np.triu(rng.random((n, n)) < 0.5, k=1)
    adj = _repair(adj)
    adj = _cap_edges(adj, space.max_edges, rng)
    interior = [str(rng.choice(space.vocab)) for _ in range(n - 2)]
    ops = (INPUT, *interior, OUTPUT)
    return validate(Architecture(ops, adj), vocab=space.vocab)


def _applicable(arch: Architecture, space: SpaceSpec):
    kinds = []
    interior = arch.interior()
    n = arch.n_nodes
    n_edges = arch.n_edges
    if interior and len(space.vocab) >= 2:
        kinds.append(Mutation.CHANGE_OP)
    if n < space.max_nodes and n_edges + 2 <= space.max_edges:
        kinds.append(Mutation.ADD_NODE)
    if interior and n - 1 >= space.min_nodes:
        kinds.append(Mutation.REMOVE_NODE)
    if n_edges < space.max_edges and n_edges < n * (n - 1) // 2:
        kinds.append(Mutation.ADD_EDGE)
    if _removable_edges(arch.adj):
        kinds.append(Mutation.REMOVE_EDGE)
    return kinds


def _apply_mutation(arch, space, kind, rng):
    ops = list(arch.ops)
    adj = np.array(arch.adj, dtype=bool)
    n = arch.n_nodes
    if kind is Mutation.CHANGE_OP:
        node = int(rng.choice(arch.interior()))
        choices = [op for op in space.vocab if op != ops[node]]
        ops[node] = str(rng.choice(choices))
    elif kind is Mutation.ADD_NODE:
        pos = int(rng.integers(1, n))
        adj = np.insert(adj, pos, False, axis=0)
        adj = np.insert(adj, pos, False, axis=1)
        adj[int(rng.integers(0, pos)), pos] = True
        adj[pos, int(rng.integers(pos + 1, n + 1))] = True
        ops.insert(pos, str(rng.choice(space.vocab)))
    elif kind is Mutation.REMOVE_NODE:
        node = int(rng.choice(arch.interior()))
        adj = np.delete(np.delete(adj, node, axis=0), node, axis=1)
        adj = _repair(adj)
        adj = _cap_edges(adj, space.max_edges, rng)
        ops.pop(node)
    elif kind is Mutation.ADD_EDGE:
        missing = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if not adj[i, j]
        ]
        i, j = missing[int(rng.integers(len(missing)))]
        adj[i, j] = True
    elif kind is Mutation.REMOVE_EDGE:
        edges = _removable_edges(adj)
        i, j = edges[int(rng.integers(len(edges)))]
        adj[i, j] = False
    return validate(Architecture(tuple(ops), adj), vocab=space.vocab)


def mutate(arch: Architecture, space: SpaceSpec, seed) -> Architecture:
    """One random applicable mutation; falls through kinds that cannot
    change the architecture, returning the input only if none can."""
    rng = _rng(seed)
    original = canonical_key(arch)
    kinds = _applicable(arch, space)
    if not kinds:
        return arch
    order = [kinds[int(k)] for k in rng.permutation(len(kinds))]
    for kind in order:
        for _ in range(8):
            candidate = _apply_mutation(arch, space, kind, rng)
            if canonical_key(candidate) != original:
                return candidate
    return arch


def generate_pool(
    model: GpModel,
    evaluated,
    space: SpaceSpec,
    size: int,
    mutate_rounds: int = 5,
    kind: str = "ucb",
    kappa: float = 2.0,
    seed=0,
):
    """Evolve a pool of unevaluated candidates under the acquisition.

    Seeds are drawn from the archive with softmax weights over acquisition
    scores (temperature 1); each round mutates every member, merges, and
    keeps the top ``size`` by score.  The output excludes evaluated keys,
    is deduplicated, and is padded with random architectures if short.
    """
    if size < 1:
        raise ValueError("pool size must be >= 1")
    rng = _rng(seed)
    evaluated = list(evaluated)
    evaluated_keys = {canonical_key(a) for a, _ in evaluated}

    def pad(pool):
        seen = {canonical_key(a) for a in pool} | evaluated_keys
        guard = 0
        while len(pool) < size and guard < 200 * size:
            cand = random_architecture(space, rng)
            key = canonical_key(cand)
            guard += 1
            if key not in seen:
                seen.add(key)
                pool.append(cand)
        return pool

    if not evaluated:
        return pad([])

    archive = [a for a, _ in evaluated]
    scores = acquisition_scores(model, archive, kind, kappa)
    k0 = min(math.ceil(size / 4), len(archive))
    logits = scores - np.max(scores)
    probs = np.exp(logits)
    probs /= probs.sum()
    picked = rng.choice(len(archive), size=k0, replace=False, p=probs)
    population = {}
    for idx in picked:
        a = archive[int(idx)]
        population[canonical_key(a)] = a

    for _ in range(mutate_rounds):
        members = list(population.values())
        for member in members:
            child = mutate(member, space, rng)
            population.setdefault(canonical_key(child), child)
        members = list(population.values())
        member_scores = acquisition_scores(model, members, kind, kappa)
        order = np.argsort(-member_scores, kind="stable")[:size]
        population = {
            canonical_key(members[int(i)]): members[int(i)] for i in order
        }

    pool = [a for k, a in population.items() if k not in evaluated_keys]
    pool = pool[:size]
    return pad(pool)
