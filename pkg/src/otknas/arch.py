"""Architecture graphs and the empirical measures extracted from them.

An architecture is a labelled DAG: one operation label per node plus a
boolean adjacency matrix.  Three normalized measures summarize it: the
n-gram measure over interior operation sequences, and the indegree and
outdegree measures over normalized longest-path depths.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    CyclicGraph,
    EmptyMeasure,
    MissingInputOrOutput,
    UnknownOperation,
)

INPUT = "input"
OUTPUT = "output"
RESERVED = (INPUT, OUTPUT)


@dataclass(frozen=True, eq=False)
class Architecture:
    """Labelled DAG with ``adj[i, j]`` meaning an edge i -> j.

    After :func:`validate` the node order is topological with node 0 the
    input and the last node the output, and ``adj`` is strictly upper
    triangular.
    """

    ops: tuple
    adj: np.ndarray

    def __post_init__(self):
        ops = tuple(str(o) for o in self.ops)
        adj = np.array(self.adj, dtype=bool)
        adj.setflags(write=False)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "adj", adj)

    @property
    def n_nodes(self) -> int:
        return len(self.ops)

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum())

    def edges(self):
        rows, cols = np.nonzero(self.adj)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def interior(self):
        """Indices of nodes that are neither input nor output."""
        return [i for i, op in enumerate(self.ops) if op not in RESERVED]

    def to_json(self) -> str:
        return json.dumps(
            {"ops": list(self.ops), "adj": self.adj.astype(int).tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "Architecture":
        data = json.loads(text)
        return cls(tuple(data["ops"]), np.array(data["adj"], dtype=bool))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite measure: distinct atoms with nonnegative weights summing to 1."""

    support: tuple
    weights: tuple

    def __post_init__(self):
        support = tuple(self.support)
        weights = tuple(float(w) for w in self.weights)
        if len(support) != len(weights):
            raise ValueError("support and weights must have equal length")
        if not support:
            raise EmptyMeasure("measure has empty support")
        if len(set(support)) != len(support):
            raise ValueError("support atoms must be distinct")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {sum(weights)!r}, expected 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class DepthProfile:
    """Per-node longest-path lengths from the input, plus the total depth."""

    eta: tuple
    m: int


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return seen


def _topological_order(adj: np.ndarray) -> list:
    """Kahn's algorithm with ties broken by smallest original index."""
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, int(j))
    if len(order) != n:
        raise CyclicGraph("adjacency matrix contains a directed cycle")
    return order


def validate(arch: Architecture, vocab=None) -> Architecture:
    """Normalize an architecture for downstream feature extraction.

    Removes nodes that are unreachable from the input or cannot reach the
    output, verifies acyclicity and input/output uniqueness, and reorders
    nodes into a fixed topological order (ties broken by original index).
    """
    adj = np.asarray(arch.adj, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency matrix must be square")
    if adj.shape[0] != len(arch.ops):
        raise ValueError("ops length must match adjacency dimension")
    ops = arch.ops
    if ops.count(INPUT) != 1 or ops.count(OUTPUT) != 1:
        raise MissingInputOrOutput(
            "exactly one 'input' and one 'output' node required"
        )
    if vocab is not None:
        allowed = set(vocab)
        for op in ops:
            if op not in RESERVED and op not in allowed:
                raise UnknownOperation(op)

    src = ops.index(INPUT)
    dst = ops.index(OUTPUT)
    fwd = _reachable(adj, src)
    bwd = _reachable(adj.T, dst)
    keep = [i for i in range(len(ops)) if fwd[i] and bwd[i]]
    if src not in keep or dst not in keep:
        raise MissingInputOrOutput("input node cannot reach the output node")

    sub = adj[np.ix_(keep, keep)]
    if sub.diagonal().any():
        raise CyclicGraph("self-loop detected")
    order = _topological_order(sub)
    new_ops = tuple(ops[keep[i]] for i in order)
    new_adj = sub[np.ix_(order, order)]
    if np.tril(new_adj).any():
        raise CyclicGraph("adjacency matrix contains a directed cycle")
    return Architecture(new_ops, new_adj)


def _require_validated(arch: Architecture):
    if np.tril(arch.adj).any():
        raise ValueError("architecture must be validated first")


def ngram_measure(arch: Architecture, n: int, vocab) -> EmpiricalMeasure:
    """Normalized counts of n-node interior paths as an empirical measure.

    An atom is the tuple of operation labels along a directed path of
    exactly ``n`` interior nodes; input and output never contribute.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_validated(arch)
    allowed = set(vocab)
    interior = arch.interior()
    for i in interior:
        if arch.ops[i] not in allowed:
            raise UnknownOperation(arch.ops[i])

    counts: dict = {}
    total = 0
    interior_set = set(interior)
    if n == 1:
        for i in interior:
            atom = (arch.ops[i],)
            counts[atom] = counts.get(atom, 0) + 1
            total += 1
    else:
        succ = {
            i: [j for j in np.nonzero(arch.adj[i])[0] if int(j) in interior_set]
            for i in interior
        }
        stack = [(i, (i,)) for i in interior]
        while stack:
            node, path = stack.pop()
            if len(path) == n:
                atom = tuple(arch.ops[k] for k in path)
                counts[atom] = counts.get(atom, 0) + 1
                total += 1
                continue
            for j in succ[node]:
                stack.append((int(j), path + (int(j),)))
    if total == 0:
        raise EmptyMeasure(f"no interior {n}-gram paths")
    atoms = sorted(counts)
    return EmpiricalMeasure(atoms, tuple(counts[a] / total for a in atoms))


def depth_profile(arch: Architecture) -> DepthProfile:
    """Longest-path lengths from the input, by dynamic programming."""
    _require_validated(arch)
    n = arch.n_nodes
    eta = [0] * n
    for j in range(1, n):
        parents = np.nonzero(arch.adj[:, j])[0]
        eta[j] = max(eta[int(i)] + 1 for i in parents)
    return DepthProfile(tuple(eta), eta[-1])


def degree_measures(arch: Architecture):
    """Edge-normalized indegree and outdegree measures on depth atoms.

    Mass ``deg(node)/E`` is placed at the rational atom
    ``(eta[node]+1)/(m+1)``; equal atoms are merged.
    """
    _require_validated(arch)
    prof = depth_profile(arch)
    total_edges = arch.n_edges
    indeg = arch.adj.sum(axis=0).astype(int)
    outdeg = arch.adj.sum(axis=1).astype(int)

    def build(degrees):
        masses: dict = {}
        for i, d in enumerate(degrees):
            if d == 0:
                continue
            atom = Fraction(prof.eta[i] + 1, prof.m + 1)
            masses[atom] = masses.get(atom, 0.0) + d / total_edges
        atoms = sorted(masses)
        return EmpiricalMeasure(atoms, tuple(masses[a] for a in atoms))

    return build(indeg), build(outdeg)


def canonical_key(arch: Architecture) -> str:
    """Deterministic key: labels in stored order plus flattened adjacency.

    Equal representations produce equal keys; graph-isomorphism
    canonicalization is not attempted.
    """
    bits = "".join("1" if b else "0" for b in arch.adj.ravel())
    return ";".join(arch.ops) + "|" + bits
