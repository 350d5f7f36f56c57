from fractions import Fraction

import numpy as np
import pytest

from otknas.arch import EmpiricalMeasure
from otknas.errors import AtomNotInTree, ParseError, UnknownNode, UnsupportedN
from otknas.trees import (
    MetricTree,
    TaxonomySpec,
    build_operation_tree,
    chain_tree,
    default_taxonomy,
    parse_taxonomy,
    subtree_masses,
    tree_distance,
)


def atom_distance(tree, a, b):
    return tree_distance(tree, tree.node_of(a), tree.node_of(b))


class TestTaxonomy:
    def test_parse_roundtrip(self):
        spec = parse_taxonomy(
            """
            root
              conv 0.9
                cv1 0.1
                cv3 0.1
              mp3 1.0
            """
        )
        assert sorted(spec.leaf_labels()) == ["cv1", "cv3", "mp3"]
        spec.check_vocab(("cv1", "cv3", "mp3"))

    def test_parse_errors(self):
        with pytest.raises(ParseError):
            parse_taxonomy("")
        with pytest.raises(ParseError):
            parse_taxonomy("root 0.5")
        with pytest.raises(ParseError):
            parse_taxonomy("root\n  a 0.1\nsecond_root\n  b 0.1")
        with pytest.raises(ParseError):
            parse_taxonomy("root\n  a -1.0")

    def test_vocab_mismatch(self):
        spec = TaxonomySpec.flat(("a", "b"))
        with pytest.raises(ParseError):
            spec.check_vocab(("a", "b", "c"))


class TestOperationTree:
    def test_default_pairwise_distances(self):
        tree = build_operation_tree(default_taxonomy(), 1)
        assert atom_distance(tree, ("cv1",), ("cv3",)) == pytest.approx(0.2)
        assert atom_distance(tree, ("cv1",), ("mp3",)) == pytest.approx(2.0)
        assert atom_distance(tree, ("cv3",), ("mp3",)) == pytest.approx(2.0)

    def test_self_distance_zero(self):
        tree = build_operation_tree(default_taxonomy(), 1)
        node = tree.node_of(("cv1",))
        assert tree_distance(tree, node, node) == 0.0

    def test_2gram_same_branch_pairs(self):
        tree = build_operation_tree(default_taxonomy(), 2)
        assert atom_distance(tree, ("cv1", "cv3"), ("cv3", "cv3")) == pytest.approx(0.2)
        # cross-branch pairs carry the shrunken leaf edges
        assert atom_distance(tree, ("cv1", "mp3"), ("cv3", "mp3")) == pytest.approx(0.02)

    def test_2gram_depths(self):
        tree = build_operation_tree(default_taxonomy(), 2)
        for a in ("cv1", "cv3", "mp3"):
            for b in ("cv1", "cv3", "mp3"):
                node = tree.node_of((a, b))
                assert tree.depth[node] == pytest.approx(1.0)

    def test_unsupported_order(self):
        with pytest.raises(UnsupportedN):
            build_operation_tree(default_taxonomy(), 3)
        with pytest.raises(UnsupportedN):
            build_operation_tree(default_taxonomy(), 0)


class TestChainTree:
    def test_golden_chain_weights(self):
        supports = [
            Fraction(1, 5),
            Fraction(1, 4),
            Fraction(2, 5),
            Fraction(2, 4),
            Fraction(3, 5),
            Fraction(3, 4),
            Fraction(4, 5),
            Fraction(1),
        ]
        tree = chain_tree(supports)
        expected = [1 / 20, 3 / 20, 1 / 10, 1 / 10, 3 / 20, 1 / 20, 1 / 5]
        assert np.allclose(tree.weight[1:], expected)

    def test_singleton(self):
        tree = chain_tree([0.5])
        assert tree.n_nodes == 1
        assert tree_distance(tree, 0, 0) == 0.0

    def test_two_point_l1(self):
        tree = chain_tree([0.25, 0.75])
        assert atom_distance(tree, 0.25, 0.75) == pytest.approx(0.5)

    def test_line_metric(self):
        tree = chain_tree([Fraction(1, 5), Fraction(2, 5), Fraction(1)])
        assert atom_distance(tree, Fraction(1, 5), Fraction(2, 5)) == pytest.approx(0.2)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            chain_tree([0.5, 0.25])
        with pytest.raises(ValueError):
            chain_tree([])


def random_tree(rng, n):
    parent = [-1] + [int(rng.integers(0, i)) for i in range(1, n)]
    weight = [0.0] + list(rng.uniform(0.05, 2.0, n - 1))
    atoms = {i: f"atom{i}" for i in range(n)}
    return MetricTree(parent, weight, atoms)


class TestTreeDistance:
    def test_metric_axioms(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            tree = random_tree(rng, int(rng.integers(3, 12)))
            n = tree.n_nodes
            for _ in range(15):
                a, b, c = rng.integers(0, n, size=3)
                dab = tree_distance(tree, int(a), int(b))
                dba = tree_distance(tree, int(b), int(a))
                assert dab == pytest.approx(dba, abs=1e-15)
                assert tree_distance(tree, int(a), int(a)) == 0.0
                dac = tree_distance(tree, int(a), int(c))
                dcb = tree_distance(tree, int(c), int(b))
                assert dab <= dac + dcb + 1e-12

    def test_unknown_node(self):
        tree = random_tree(np.random.default_rng(0), 4)
        with pytest.raises(UnknownNode):
            tree_distance(tree, 0, 99)


class TestSubtreeMasses:
    def test_mass_at_root(self):
        tree = random_tree(np.random.default_rng(1), 6)
        mu = EmpiricalMeasure(("atom0",), (1.0,))
        masses = subtree_masses(tree, mu)
        assert masses[0] == pytest.approx(1.0)
        assert np.allclose(masses[1:], 0.0)

    def test_mass_at_leaf_marks_path(self):
        parent = [-1, 0, 1, 2]
        weight = [0.0, 0.3, 0.4, 0.5]
        tree = MetricTree(parent, weight, {3: "leaf"})
        masses = subtree_masses(tree, EmpiricalMeasure(("leaf",), (1.0,)))
        assert np.allclose(masses, [1, 1, 1, 1])

    def test_golden_indegree_chain(self, golden_x):
        from otknas.arch import degree_measures

        ind, _ = degree_measures(golden_x)
        supports = [
            Fraction(1, 5),
            Fraction(1, 4),
            Fraction(2, 5),
            Fraction(2, 4),
            Fraction(3, 5),
            Fraction(3, 4),
            Fraction(4, 5),
            Fraction(1),
        ]
        tree = chain_tree(supports)
        masses = subtree_masses(tree, ind)
        assert masses[tree.node_of(Fraction(2, 4))] == pytest.approx(1.0)
        assert masses[tree.node_of(Fraction(3, 5))] == pytest.approx(4 / 7)

    def test_atom_not_in_tree(self):
        tree = chain_tree([0.25, 0.75])
        with pytest.raises(AtomNotInTree):
            subtree_masses(tree, EmpiricalMeasure((0.5,), (1.0,)))

    def test_partition_property(self):
        # subtree mass at a node = children subtree masses + local mass
        rng = np.random.default_rng(5)
        for _ in range(20):
            tree = random_tree(rng, int(rng.integers(4, 10)))
            n = tree.n_nodes
            w = rng.dirichlet(np.ones(n))
            mu = EmpiricalMeasure(
                tuple(f"atom{i}" for i in range(n)), tuple(w)
            )
            masses = subtree_masses(tree, mu)
            assert np.all(masses >= -1e-15)
            assert np.all(masses <= 1 + 1e-12)
            for node in range(n):
                child_sum = sum(
                    masses[c]
                    for c in range(1, n)
                    if tree.parent[c] == node
                )
                assert masses[node] == pytest.approx(child_sum + w[node])
