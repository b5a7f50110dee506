import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discriminer.benchgen import BenchSpec, generate
from discriminer.discriminant import Conjunction, Discriminant, PathDNF, ThresholdTest, accuracy, label_all
from discriminer.dtree import DecisionTree, expand_weighted, export_dot, fit_tree, tree_to_discriminant
from discriminer.labeling import label_corpus

from conftest import two_filter_corpus


def fit(X, D, names=None, **kw):
    X = np.asarray(X)
    names = names or [f"a{j}" for j in range(X.shape[1])]
    return fit_tree(X, expand_weighted(D), np.asarray(D).shape[1], names, **kw)


def dot_counts(text):
    nodes = re.findall(r"^\s+n\d+ \[label=", text, flags=re.M)
    edges = re.findall(r"^\s+n\d+ -> n\d+ \[label=\"(true|false)\"\]", text, flags=re.M)
    return len(nodes), edges


def test_expand_weighted_examples():
    s = expand_weighted(np.array([[1.0, 0.0]]))
    assert [(x.label, x.weight) for x in s] == [(0, 1.0)]
    s = expand_weighted(np.array([[0.22, 0.78]]), trace_ids=["t"])
    assert [(x.trace_id, x.label, x.weight) for x in s] == [("t", 0, 0.22), ("t", 1, 0.78)]
    s = expand_weighted(np.array([[1e-7, 0.5, 0.5 - 1e-7]]))
    assert [x.label for x in s] == [1, 2]
    assert math.fsum(x.weight for x in s) == pytest.approx(1.0 - 1e-7, abs=1e-12)


def test_single_label_gives_single_leaf():
    tree = fit([[0], [3], [5]], [[1, 0], [1, 0], [1, 0]])
    assert tree.height() == 0 and tree.node_count() == 1
    psi = tree_to_discriminant(tree)
    assert psi.formulas[0] == PathDNF(((),))
    n, edges = dot_counts(export_dot(tree))
    assert n == 1 and edges == []


def test_perfect_split_on_called():
    X = [[0, 2], [0, 1], [3, 2], [1, 1]]
    D = [[1, 0], [1, 0], [0, 1], [0, 1]]
    tree = fit(X, D, names=["f", "g"])
    assert tree.height() == 1
    assert (tree.root.feature, tree.root.threshold) == (0, 0.5)
    psi = tree_to_discriminant(tree)
    assert psi.formulas[0] == PathDNF(((ThresholdTest(0, 0.5, True),),))
    assert psi.formulas[1] == Conjunction(())
    dot = export_dot(tree)
    n, edges = dot_counts(dot)
    assert n == 3 and sorted(edges) == ["false", "true"]
    assert 'label="f <= 0.5"' in dot


def test_gain_ties_go_to_smallest_name_then_threshold():
    # columns are identical, so every split ties; "alpha" sorts first
    X = np.array([[0, 0], [0, 0], [5, 5], [5, 5]])
    D = [[1, 0], [1, 0], [0, 1], [0, 1]]
    tree = fit(X, D, names=["zeta", "alpha"])
    assert tree.root.feature == 1
    # three symmetric values: thresholds 0.5 and 1.5 tie on a 1/1/1/1 layout
    X = np.array([[0], [1], [1], [2]])
    D = [[1, 0], [0.5, 0.5], [0.5, 0.5], [0, 1]]
    tree = fit(X, D)
    assert tree.root.threshold == 0.5


def test_min_leaf_weight_and_max_depth():
    X = [[0], [1], [2], [3]]
    D = [[1, 0], [0, 1], [1, 0], [0, 1]]
    assert fit(X, D, max_depth=1).height() == 1
    assert fit(X, D).height() == 3
    assert fit(X, D, min_leaf_weight=3.0).height() == 0


def test_leaf_label_ties_go_lower():
    tree = fit([[0], [0]], [[0.5, 0.5], [0.5, 0.5]])
    assert tree.root.label == 0


def test_names_must_match_columns():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((2, 2)), expand_weighted(np.eye(2)), 2, ["only"])


def random_labeled(rng, n=40, m=5):
    X = rng.integers(0, 5, size=(n, m))
    D = rng.dirichlet(np.ones(3) * 0.3, size=n)
    return X, D


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_tree_and_discriminant_agree(seed):
    X, D = random_labeled(np.random.default_rng(seed))
    tree = fit(X, D)
    psi = tree_to_discriminant(tree)
    assert label_all(X, psi).tolist() == tree.predict(X).tolist()
    # the tree is at least as accurate as the best single leaf on training data
    majority = max(accuracy(_constant(k, 3), X, D) for k in range(3))
    assert accuracy(psi, X, D) >= majority - 1e-12


def _constant(label, k):
    never = PathDNF(())
    return Discriminant(tuple(never if i != label else PathDNF(((),)) for i in range(k - 1)) + (Conjunction(()),))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_monotone_relabeling_keeps_predictions(seed):
    rng = np.random.default_rng(seed)
    X, D = random_labeled(rng)
    X2 = X.astype(float) ** 3 * 7 + 2  # strictly increasing on counts >= 0
    a = fit(X, D).predict(X)
    b = fit(X2, D).predict(X2)
    assert a.tolist() == b.tolist()


def test_fit_is_deterministic_and_round_trips():
    X, D = random_labeled(np.random.default_rng(4), n=80)
    t1, t2 = fit(X, D), fit(X, D)
    assert t1.to_dict() == t2.to_dict()
    assert export_dot(t1) == export_dot(t2)
    back = DecisionTree.from_dict(t1.to_dict())
    assert back.to_dict() == t1.to_dict()
    assert back.predict(X).tolist() == t1.predict(X).tolist()


def test_gini_never_increases_along_accepted_splits():
    X, D = random_labeled(np.random.default_rng(6), n=120)
    tree = fit(X, D)

    def gini_w(h):
        w = h.sum()
        return w - (h @ h) / w if w > 0 else 0.0

    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            assert np.all(node.histogram >= 0)
            continue
        assert gini_w(node.left.histogram) + gini_w(node.right.histogram) < gini_w(node.histogram)
        stack += [node.left, node.right]


def test_lsb0_tree_height_seven():
    corpus = generate(BenchSpec("lsb0", 10, 188, seed=1))
    labeled = label_corpus(corpus, seed=1)
    X = corpus.count_matrix()
    tree = fit_tree(X, expand_weighted(labeled.distributions), labeled.k, corpus.methods,
                    centers_s=labeled.clustering.centers_s)
    psi = tree_to_discriminant(tree)
    assert tree.height() == 7
    assert accuracy(psi, X, labeled.distributions) == pytest.approx(1.0, abs=0.005)
    n, edges = dot_counts(export_dot(tree))
    assert n == tree.node_count() <= 2 ** (7 + 1) - 1
    assert len(edges) == n - 1


def test_two_filter_tree_shape():
    corpus = two_filter_corpus()
    labeled = label_corpus(corpus)
    assert labeled.k == 3
    X = corpus.count_matrix()
    tree = fit_tree(X, expand_weighted(labeled.distributions), 3, corpus.methods,
                    centers_s=labeled.clustering.centers_s)
    filters = {"snapservice.model.Filter.filter", "image.OilFilter.filterPixels"}
    top = [tree.root] + [c for c in (tree.root.left, tree.root.right) if not c.is_leaf]
    assert all(corpus.methods[n.feature] in filters for n in top)
    assert len(top) == 2 and tree.height() == 2
    # every leaf of the slowest label sits below a filterPixels test
    def slow_paths(node, tested):
        if node.is_leaf:
            return [tested] if node.label == 2 else []
        tested = tested | {corpus.methods[node.feature]}
        return slow_paths(node.left, tested) + slow_paths(node.right, tested)

    paths = slow_paths(tree.root, frozenset())
    assert paths and all("image.OilFilter.filterPixels" in p for p in paths)
    psi = tree_to_discriminant(tree)
    assert accuracy(psi, X, labeled.distributions) == pytest.approx(1.0, abs=1e-9)
