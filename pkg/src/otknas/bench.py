"""Evaluation oracles: a deterministic synthetic tabular benchmark and a
loader for external tabular files.

Synthetic scores are a logistic function of exactly the features the
tree-Wasserstein kernel can see (operation frequencies, edge density,
normalized depth) plus a small key-hashed perturbation, so search quality
is testable at desk scale.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from .arch import (
    Architecture,
    canonical_key,
    depth_profile,
    validate,
)
from .errors import (
    InvalidArchitecture,
    OtkError,
    ParseError,
    SpaceTooLarge,
    UnknownArchitecture,
)
from .pool import SpaceSpec

TABULAR_HEADER = ["key", "ops", "adj_bits", "val_score", "test_score", "cost"]
MAX_TABLE_KEYS = 50_000
MAX_RAW_COMBOS = 2_000_000
DEFAULT_COST = 0.7


@dataclass
class BenchmarkOracle:
    """Immutable lookup table from canonical key to evaluation scores."""

    table: dict
    space: SpaceSpec
    archs: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self._sorted_keys = tuple(sorted(self.table))

    @property
    def sorted_keys(self):
        return self._sorted_keys

    def __len__(self):
        return len(self.table)


def query(oracle: BenchmarkOracle, arch: Architecture):
    """Exact table lookup of (val_score, test_score, cost)."""
    key = canonical_key(arch)
    try:
        return oracle.table[key]
    except KeyError:
        raise UnknownArchitecture(key) from None


def _hash_unit(text: str) -> float:
    """Deterministic value in [0, 1) derived from a string."""
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def _features(arch: Architecture, vocab, max_nodes: int) -> np.ndarray:
    interior = arch.interior()
    counts = np.zeros(len(vocab))
    index = {op: k for k, op in enumerate(vocab)}
    for i in interior:
        counts[index[arch.ops[i]]] += 1
    if interior:
        counts /= len(interior)
    n = arch.n_nodes
    density = arch.n_edges / (n * (n - 1) / 2)
    depth = depth_profile(arch).m / (max_nodes - 1)
    return np.concatenate([counts, [density, depth]])


def _upper_index_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def enumerate_space(space: SpaceSpec):
    """All distinct valid architectures within the space bounds."""
    combos = 0
    for n in range(space.min_nodes, space.max_nodes + 1):
        combos += 2 ** (n * (n - 1) // 2) * len(space.vocab) ** max(n - 2, 0)
    if combos > MAX_RAW_COMBOS:
        raise SpaceTooLarge(f"{combos} raw combinations to scan")

    seen = {}
    for n in range(space.min_nodes, space.max_nodes + 1):
        pairs = _upper_index_pairs(n)
        for bits in itertools.product((False, True), repeat=len(pairs)):
            adj = np.zeros((n, n), dtype=bool)
            for (i, j), bit in zip(pairs, bits):
                adj[i, j] = bit
            if adj.sum() > space.max_edges:
                continue
            for interior in itertools.product(space.vocab, repeat=n - 2):
                ops = ("input", *interior, "output")
                try:
                    cand = validate(Architecture(ops, adj), vocab=space.vocab)
                except OtkError:
                    continue
                if cand.n_nodes != n:
                    continue  # pruned duplicates appear at their own size
                key = canonical_key(cand)
                seen.setdefault(key, cand)
                if len(seen) > MAX_TABLE_KEYS:
                    raise SpaceTooLarge(
                        f"more than {MAX_TABLE_KEYS} distinct architectures"
                    )
    return seen


def synth_space(space: SpaceSpec, seed: int) -> BenchmarkOracle:
    """Deterministic synthetic benchmark over the whole space.

    val = logistic(w . f(x) + eps_key) with w drawn once from the seed and
    eps a +-0.02 key-hashed perturbation; the test score adds a +-0.01
    perturbation; cost is a constant 0.7 hours per evaluation.
    """
    archs = enumerate_space(space)
    rng = np.random.default_rng(seed)
    dim = len(space.vocab) + 2
    w = rng.normal(0.0, 2.5, size=dim)
    feats = {
        key: _features(a, space.vocab, space.max_nodes)
        for key, a in archs.items()
    }

    salt = 0
    while True:
        table = {}
        for key, f in feats.items():
            eps = (2.0 * _hash_unit(f"{key}|val|{salt}") - 1.0) * 0.02
            val = 1.0 / (1.0 + np.exp(-(w @ f + eps)))
            shift = (2.0 * _hash_unit(f"{key}|test|{salt}") - 1.0) * 0.01
            test = float(np.clip(val + shift, 0.0, 1.0))
            table[key] = (float(val), test, DEFAULT_COST)
        vals = [v for v, _, _ in table.values()]
        top = max(vals)
        if vals.count(top) == 1:
            break
        salt += 1  # re-perturb until the optimum is unique

    matrix = np.array([feats[k] for k in sorted(table)])
    vals = np.array([table[k][0] for k in sorted(table)])
    for col in range(matrix.shape[1]):
        column = matrix[:, col]
        if np.std(column) < 1e-12:
            continue
        corr = abs(np.corrcoef(column, vals)[0, 1])
        assert corr < 0.95, f"feature {col} alone explains the objective"

    return BenchmarkOracle(table=table, space=space, archs=archs)


def _adj_bits(arch: Architecture) -> str:
    pairs = _upper_index_pairs(arch.n_nodes)
    return "".join("1" if arch.adj[i, j] else "0" for i, j in pairs)


def export_tabular(oracle: BenchmarkOracle, path):
    """Write the oracle as CSV, sorted by key for byte-stable output."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABULAR_HEADER)
        for key in oracle.sorted_keys:
            arch = oracle.archs[key]
            val, test, cost = oracle.table[key]
            writer.writerow(
                [
                    key,
                    ";".join(arch.ops),
                    _adj_bits(arch),
                    repr(val),
                    repr(test),
                    repr(cost),
                ]
            )


def load_tabular(path) -> BenchmarkOracle:
    """Parse a tabular benchmark CSV, validating every row's architecture."""
    table = {}
    archs = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if header != TABULAR_HEADER:
            raise ParseError(
                f"expected header {','.join(TABULAR_HEADER)}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TABULAR_HEADER):
                raise ParseError(f"expected {len(TABULAR_HEADER)} fields", line=lineno)
            _, ops_text, bits, val_text, test_text, cost_text = row
            ops = tuple(ops_text.split(";"))
            n = len(ops)
            pairs = _upper_index_pairs(n)
            if len(bits) != len(pairs) or set(bits) - {"0", "1"}:
                raise ParseError("bad adjacency bits", line=lineno)
            adj = np.zeros((n, n), dtype=bool)
            for (i, j), bit in zip(pairs, bits):
                adj[i, j] = bit == "1"
            try:
                val = float(val_text)
                test = float(test_text)
                cost = float(cost_text)
            except ValueError:
                raise ParseError("bad numeric field", line=lineno) from None
            try:
                arch = validate(Architecture(ops, adj))
            except OtkError as exc:
                raise InvalidArchitecture(str(exc), line=lineno) from None
            if not (0.0 <= val <= 1.0 and 0.0 <= test <= 1.0) or cost < 0:
                raise InvalidArchitecture("scores out of range", line=lineno)
            key = canonical_key(arch)
            table[key] = (val, test, cost)
            archs[key] = arch

    if not table:
        raise ParseError("no data rows", line=2)
    vocab = sorted(
        {op for a in archs.values() for op in a.ops if op not in ("input", "output")}
    )
    sizes = [a.n_nodes for a in archs.values()]
    edges = [a.n_edges for a in archs.values()]
    space = SpaceSpec(
        vocab=tuple(vocab) if vocab else ("noop",),
        max_nodes=max(sizes),
        max_edges=max(max(edges), max(sizes) - 1),
        min_nodes=min(sizes),
    )
    return BenchmarkOracle(table=table, space=space, archs=archs)
