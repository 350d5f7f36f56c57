"""Ground-metric trees: operation taxonomies and one-dimensional chains."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from itertools import product

import numpy as np

from .arch import EmpiricalMeasure
from .errors import AtomNotInTree, ParseError, UnknownNode, UnsupportedN


@dataclass(frozen=True)
class TaxonomyNode:
    name: str
    weight: float  # edge weight to the parent; 0.0 only at the root
    children: tuple

    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class TaxonomySpec:
    """Nested grouping of operation labels with per-edge weights."""

    root: TaxonomyNode

    def leaf_labels(self):
        out = []

        def walk(node):
            if node.is_leaf():
                out.append(node.name)
            for child in node.children:
                walk(child)

        for child in self.root.children:
            walk(child)
        return out

    def check_vocab(self, vocab):
        leaves = self.leaf_labels()
        if len(set(leaves)) != len(leaves):
            raise ParseError("duplicate leaf label in taxonomy")
        missing = set(vocab) - set(leaves)
        extra = set(leaves) - set(vocab)
        if missing or extra:
            raise ParseError(
                f"taxonomy leaves {sorted(leaves)} do not match vocabulary "
                f"{sorted(vocab)}"
            )

    @staticmethod
    def flat(vocab, weight: float = 1.0) -> "TaxonomySpec":
        """One leaf per operation, all attached directly to the root."""
        children = tuple(TaxonomyNode(op, weight, ()) for op in sorted(vocab))
        return TaxonomySpec(TaxonomyNode("root", 0.0, children))


def parse_taxonomy(text: str) -> TaxonomySpec:
    """Parse the indentation-nested ``name weight`` taxonomy format."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        parts = line.split()
        if len(parts) == 1:
            entries.append((lineno, indent, parts[0], None))
        elif len(parts) == 2:
            try:
                weight = float(parts[1])
            except ValueError:
                raise ParseError(f"bad weight {parts[1]!r}", line=lineno)
            if weight <= 0:
                raise ParseError("edge weights must be positive", line=lineno)
            entries.append((lineno, indent, parts[0], weight))
        else:
            raise ParseError("expected 'name [weight]'", line=lineno)
    if not entries:
        raise ParseError("empty taxonomy")
    lineno, indent0, name0, w0 = entries[0]
    if w0 is not None:
        raise ParseError("root node takes no weight", line=lineno)

    # Mutable scaffolding, frozen into TaxonomyNode at the end.
    root = {"name": name0, "weight": 0.0, "children": []}
    stack = [(indent0, root)]
    for lineno, indent, name, weight in entries[1:]:
        if weight is None:
            raise ParseError("only the root may omit its weight", line=lineno)
        while stack and indent <= stack[-1][0]:
            stack.pop()
        if not stack:
            raise ParseError("multiple root nodes", line=lineno)
        node = {"name": name, "weight": weight, "children": []}
        stack[-1][1]["children"].append(node)
        stack.append((indent, node))

    def freeze(node) -> TaxonomyNode:
        return TaxonomyNode(
            node["name"],
            node["weight"],
            tuple(freeze(c) for c in node["children"]),
        )

    return TaxonomySpec(freeze(root))


def load_taxonomy(path) -> TaxonomySpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_taxonomy(fh.read())


_DEFAULT_TAXONOMY = None


def default_taxonomy() -> TaxonomySpec:
    """The bundled conv/pool taxonomy over {cv1, cv3, mp3}."""
    global _DEFAULT_TAXONOMY
    if _DEFAULT_TAXONOMY is None:
        text = (
            importlib.resources.files("otknas.data")
            .joinpath("taxonomy_nb.txt")
            .read_text(encoding="utf-8")
        )
        _DEFAULT_TAXONOMY = parse_taxonomy(text)
    return _DEFAULT_TAXONOMY


class MetricTree:
    """Rooted tree with positive edge weights, stored parent-before-child.

    ``weight[i]`` is the length of the edge from node ``i`` to its parent
    (0 at the root).  Measure atoms map to nodes through ``atom_of``.
    """

    def __init__(self, parent, weight, atom_of):
        self.parent = np.asarray(parent, dtype=int)
        self.weight = np.asarray(weight, dtype=float)
        n = self.parent.size
        if self.weight.size != n:
            raise ValueError("parent and weight arrays must align")
        if n == 0 or self.parent[0] != -1:
            raise ValueError("node 0 must be the root")
        if np.any(self.parent[1:] >= np.arange(1, n)):
            raise ValueError("nodes must be stored parent-first")
        if np.any(self.weight[1:] <= 0):
            raise ValueError("edge weights must be positive")
        self.atom_of = dict(atom_of)
        if len(set(self.atom_of.values())) != len(self.atom_of):
            raise ValueError("atoms must map to distinct nodes")
        self._node_of = {atom: node for node, atom in self.atom_of.items()}
        depth = np.zeros(n, dtype=float)
        for i in range(1, n):
            depth[i] = depth[self.parent[i]] + self.weight[i]
        self.depth = depth

    @property
    def n_nodes(self) -> int:
        return self.parent.size

    def node_of(self, atom) -> int:
        try:
            return self._node_of[atom]
        except KeyError:
            raise AtomNotInTree(repr(atom)) from None


class _TreeBuilder:
    def __init__(self):
        self.parent = [-1]
        self.weight = [0.0]
        self.atom_of = {}

    def add(self, parent: int, weight: float, atom=None) -> int:
        node = len(self.parent)
        self.parent.append(parent)
        self.weight.append(float(weight))
        if atom is not None:
            self.atom_of[atom] = node
        return node

    def set_atom(self, node: int, atom):
        self.atom_of[atom] = node

    def build(self) -> MetricTree:
        atom_nodes = {node: atom for atom, node in self.atom_of.items()}
        return MetricTree(self.parent, self.weight, atom_nodes)


def _taxonomy_leaf_info(spec: TaxonomySpec):
    """Per-leaf absolute depth and own edge weight, plus root groups."""
    depth = {}
    leaf_edge = {}
    group_members = []  # (root child node, [leaf labels])

    def walk(node, acc):
        if node.is_leaf():
            depth[node.name] = acc + node.weight
            leaf_edge[node.name] = node.weight
            return [node.name]
        members = []
        for child in node.children:
            members.extend(walk(child, acc + node.weight))
        return members

    for child in spec.root.children:
        group_members.append((child, walk(child, 0.0)))
    return depth, leaf_edge, group_members


def build_operation_tree(spec: TaxonomySpec, n: int) -> MetricTree:
    """Ground-metric tree over n-gram atoms.

    For n=1 this is the taxonomy itself.  For n=2 the tree has one block
    under the root per ordered pair of top-level taxonomy branches; every
    pair atom (a, b) sits at depth (depth(a) + depth(b)) / 2, with block
    edges carrying most of the weight and pair-level leaf edges shrunk by
    a factor 0.1 for cross-branch blocks.
    """
    if n == 1:
        builder = _TreeBuilder()

        def mirror(node, parent):
            nid = builder.add(parent, node.weight)
            if node.is_leaf():
                builder.set_atom(nid, (node.name,))
            for child in node.children:
                mirror(child, nid)

        for child in spec.root.children:
            mirror(child, 0)
        return builder.build()

    if n != 2:
        raise UnsupportedN(f"operation trees support n in {{1, 2}}, got {n}")

    depth, leaf_edge, groups = _taxonomy_leaf_info(spec)
    inner = [leaf_edge[a] for a in leaf_edge if depth[a] > leaf_edge[a]]
    if inner:
        eps0 = float(np.mean(inner))
    else:
        eps0 = 0.1 * float(np.mean([g.weight for g, _ in groups]))

    builder = _TreeBuilder()
    for (gi, members_i), (gj, members_j) in product(groups, groups):
        pairs = [(a, b) for a in members_i for b in members_j]
        targets = {p: (depth[p[0]] + depth[p[1]]) / 2.0 for p in pairs}
        if gi is gj:
            if len(pairs) == 1:
                (pair,) = pairs
                builder.add(0, targets[pair], atom=pair)
                continue
            block_w = gi.weight
        else:
            eps = min(0.1 * eps0, 0.5 * min(targets.values()))
            block_w = min(targets.values()) - eps
        block = builder.add(0, block_w)
        for pair in pairs:
            builder.add(block, targets[pair] - block_w, atom=pair)
    return builder.build()


def chain_tree(supports) -> MetricTree:
    """Path tree over sorted one-dimensional supports, rooted at the smallest.

    Consecutive nodes are joined by edges whose weight is the absolute
    difference of the two values, so the induced metric is the line metric.
    """
    values = list(supports)
    if not values:
        raise ValueError("supports must be nonempty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("supports must be strictly increasing")
    builder = _TreeBuilder()
    builder.set_atom(0, values[0])
    prev = 0
    for a, b in zip(values, values[1:]):
        prev = builder.add(prev, float(b - a), atom=b)
    return builder.build()


def tree_distance(tree: MetricTree, a: int, b: int) -> float:
    """Length of the unique path between two tree nodes."""
    n = tree.n_nodes
    for node in (a, b):
        if not isinstance(node, (int, np.integer)) or not 0 <= node < n:
            raise UnknownNode(repr(node))
    dist = 0.0
    ia, ib = int(a), int(b)
    while ia != ib:
        if ia > ib:
            dist += tree.weight[ia]
            ia = int(tree.parent[ia])
        else:
            dist += tree.weight[ib]
            ib = int(tree.parent[ib])
    return dist


def subtree_masses(tree: MetricTree, mu: EmpiricalMeasure) -> np.ndarray:
    """Total measure mass in the subtree below each node.

    One bottom-up accumulation pass; entry 0 holds the total mass.
    """
    masses = np.zeros(tree.n_nodes)
    for atom, w in zip(mu.support, mu.weights):
        masses[tree.node_of(atom)] += w
    for i in range(tree.n_nodes - 1, 0, -1):
        masses[tree.parent[i]] += masses[i]
    return masses
