"""Weighted CART decision trees over method call counts.

Each trace is expanded into one weighted sample per label it has mass on,
and the tree is grown greedily by weighted Gini gain. Internal nodes test
``count(method) <= threshold`` (left) against ``> threshold`` (right), with
thresholds halfway between consecutive observed values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .discriminant import TRUE, Discriminant, PathDNF, ThresholdTest

__all__ = [
    "WEIGHT_FLOOR",
    "WeightedSample",
    "Node",
    "DecisionTree",
    "expand_weighted",
    "fit_tree",
    "tree_to_discriminant",
    "export_dot",
]

WEIGHT_FLOOR = 1e-6
MIN_GAIN = 1e-12
GAIN_TIE = 1e-12
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class WeightedSample:
    trace_id: str
    row: int  # row of the trace in the attribute matrix
    label: int
    weight: float


def expand_weighted(D: np.ndarray, trace_ids: Sequence[str] | None = None, floor: float = WEIGHT_FLOOR) -> list[WeightedSample]:
    """One sample per (trace, label) with probability above ``floor``."""
    D = np.asarray(D, dtype=float)
    if trace_ids is None:
        trace_ids = [str(i) for i in range(D.shape[0])]
    out = []
    for i, row in enumerate(D):
        for label, p in enumerate(row):
            if p > floor:
                out.append(WeightedSample(trace_ids[i], i, label, float(p)))
    return out


@dataclass
class Node:
    histogram: np.ndarray  # per-label training weight
    label: int
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class DecisionTree:
    root: Node
    attribute_names: tuple[str, ...]
    k: int
    centers_s: tuple[float, ...] | None = None

    def height(self) -> int:
        def h(node):
            return 0 if node.is_leaf else 1 + max(h(node.left), h(node.right))

        return h(self.root)

    def node_count(self) -> int:
        def c(node):
            return 1 if node.is_leaf else 1 + c(node.left) + c(node.right)

        return c(self.root)

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend((node.right, node.left))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, x in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.label
        return out

    def to_dict(self) -> dict:
        def enc(node):
            d = {"histogram": [float(v) for v in node.histogram], "label": int(node.label)}
            if self.centers_s is not None:
                d["mean_time_s"] = float(self.centers_s[node.label])
            if not node.is_leaf:
                d["attribute"] = self.attribute_names[node.feature]
                d["threshold"] = float(node.threshold)
                d["left"] = enc(node.left)
                d["right"] = enc(node.right)
            return d

        return {
            "attributes": list(self.attribute_names),
            "k": self.k,
            "centers_s": None if self.centers_s is None else [float(c) for c in self.centers_s],
            "height": self.height(),
            "root": enc(self.root),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        names = tuple(data["attributes"])
        col = {n: j for j, n in enumerate(names)}

        def dec(d):
            node = Node(histogram=np.asarray(d["histogram"], dtype=float), label=int(d["label"]))
            if "attribute" in d:
                node.feature = col[d["attribute"]]
                node.threshold = float(d["threshold"])
                node.left = dec(d["left"])
                node.right = dec(d["right"])
            return node

        centers = data.get("centers_s")
        return cls(root=dec(data["root"]), attribute_names=names, k=int(data["k"]),
                   centers_s=None if centers is None else tuple(centers))


def _gini(hist: np.ndarray) -> float:
    w = hist.sum()
    if w <= 0:
        return 0.0
    p = hist / w
    return float(1.0 - np.dot(p, p))


def _side_impurity(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """W * gini for histograms H (..., K) with totals W (...)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.einsum("...k,...k->...", H, H)
        return np.where(W > 0, W - sq / np.where(W > 0, W, 1.0), 0.0)


def _best_split(X: np.ndarray, Y: np.ndarray, min_leaf_weight: float, rank: np.ndarray):
    """Return (gain, feature, threshold) of the best split, or None.

    ``Y`` holds per-sample weighted one-hot labels (n, K). Near-ties go to the
    feature with the lowest ``rank``, then to the lower threshold.
    """
    hist = Y.sum(axis=0)
    W = hist.sum()
    parent = _gini(hist)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    active = np.flatnonzero(lo != hi)
    if len(active) == 0:
        return None
    cands = []  # (gain, feature, threshold)

    Xa = X[:, active]
    two_valued = np.all((Xa == lo[active]) | (Xa == hi[active]), axis=0)
    binary = active[two_valued]
    multi = active[~two_valued]

    if len(binary):
        # single split per column between its two values
        left_mask = (X[:, binary] == lo[binary]).astype(float)
        HL = left_mask.T @ Y  # (c, K)
        WL = HL.sum(axis=1)
        HR = hist[None, :] - HL
        WR = W - WL
        imp = (_side_impurity(HL, WL) + _side_impurity(HR, WR)) / W
        gain = parent - imp
        ok = (WL >= min_leaf_weight) & (WR >= min_leaf_weight)
        thr = (lo[binary] + hi[binary]) / 2.0
        for g, j, t, good in zip(gain, binary, thr, ok):
            if good:
                cands.append((float(g), int(j), float(t)))

    if len(multi):
        n, K = Y.shape
        step = max(1, _CHUNK_CELLS // max(1, n * K))
        for s in range(0, len(multi), step):
            cols = multi[s:s + step]
            Xc = X[:, cols]
            order = np.argsort(Xc, axis=0, kind="stable")
            xs = np.take_along_axis(Xc, order, axis=0)
            HL = np.cumsum(Y[order], axis=0)[:-1]  # (n-1, c, K)
            WL = HL.sum(axis=2)
            HR = hist[None, None, :] - HL
            WR = W - WL
            imp = (_side_impurity(HL, WL) + _side_impurity(HR, WR)) / W
            gain = parent - imp
            valid = (xs[:-1] != xs[1:]) & (WL >= min_leaf_weight) & (WR >= min_leaf_weight)
            gain = np.where(valid, gain, -np.inf)
            for c, j in enumerate(cols):
                g = gain[:, c]
                if not np.isfinite(g).any():
                    continue
                top = g.max()
                p = int(np.flatnonzero(g >= top - GAIN_TIE)[0])
                cands.append((float(top), int(j), float((xs[p, c] + xs[p + 1, c]) / 2.0)))

    if not cands:
        return None
    top = max(c[0] for c in cands)
    tied = [c for c in cands if c[0] >= top - GAIN_TIE]
    return min(tied, key=lambda c: (rank[c[1]], c[2]))


def fit_tree(
    X: np.ndarray,
    samples: Sequence[WeightedSample],
    k: int,
    attribute_names: Sequence[str],
    max_depth: int | None = None,
    min_leaf_weight: float = 1e-3,
    centers_s: Sequence[float] | None = None,
) -> DecisionTree:
    """Grow a tree on weighted samples whose attributes are rows of ``X``.

    Stops at pure nodes, at gain <= 1e-12, at ``max_depth`` and where a child
    would weigh less than ``min_leaf_weight``. Ties in gain go to the
    lexicographically smallest attribute name, then to the lower threshold.
    """
    if len(samples) == 0:
        raise ValueError("cannot fit a tree on zero samples")
    X = np.asarray(X)
    if len(attribute_names) != X.shape[1]:
        raise ValueError(f"{len(attribute_names)} attribute names for {X.shape[1]} columns")
    rows = np.array([s.row for s in samples])
    labels = np.array([s.label for s in samples])
    weights = np.array([s.weight for s in samples], dtype=float)
    Xs = X[rows]
    Y = np.zeros((len(samples), k))
    Y[np.arange(len(samples)), labels] = weights
    rank = np.empty(X.shape[1], dtype=np.int64)
    rank[sorted(range(X.shape[1]), key=lambda j: (str(attribute_names[j]), j))] = np.arange(X.shape[1])

    def leaf(hist):
        # argmax picks the lowest label on ties
        return Node(histogram=hist, label=int(np.argmax(hist)))

    def grow(idx: np.ndarray, depth: int) -> Node:
        Yn = Y[idx]
        hist = Yn.sum(axis=0)
        node = leaf(hist)
        if np.count_nonzero(hist > 0) <= 1:
            return node
        if max_depth is not None and depth >= max_depth:
            return node
        split = _best_split(Xs[idx], Yn, min_leaf_weight, rank)
        if split is None or split[0] <= MIN_GAIN:
            return node
        _, j, t = split
        go_left = Xs[idx, j] <= t
        node.feature, node.threshold = j, t
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    root = grow(np.arange(len(samples)), 0)
    return DecisionTree(
        root=root,
        attribute_names=tuple(attribute_names),
        k=k,
        centers_s=None if centers_s is None else tuple(float(c) for c in centers_s),
    )


def tree_to_discriminant(tree: DecisionTree, k: int | None = None) -> Discriminant:
    """Per label, the disjunction of root-to-leaf paths ending in that label."""
    k = tree.k if k is None else k
    paths: list[list[tuple[ThresholdTest, ...]]] = [[] for _ in range(k)]

    def walk(node, path):
        if node.is_leaf:
            paths[node.label].append(tuple(path))
            return
        walk(node.left, path + [ThresholdTest(node.feature, node.threshold, True)])
        walk(node.right, path + [ThresholdTest(node.feature, node.threshold, False)])

    walk(tree.root, [])
    formulas = [PathDNF(tuple(p)) for p in paths[:-1]] + [TRUE]
    return Discriminant(formulas=tuple(formulas), attribute_names=tree.attribute_names)


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(tree: DecisionTree) -> str:
    lines = ["digraph tree {", '  node [shape=box, fontname="Helvetica"];']
    counter = 0

    def emit(node) -> str:
        nonlocal counter
        name = f"n{counter}"
        counter += 1
        if node.is_leaf:
            parts = [f"label {node.label}"]
            if tree.centers_s is not None:
                parts.append(f"mean {tree.centers_s[node.label]:.6g} s")
            parts.append("weights [" + ", ".join(f"{v:.3g}" for v in node.histogram) + "]")
            label = "\\n".join(_dot_escape(p) for p in parts)
            lines.append(f'  {name} [label="{label}", style=rounded];')
            return name
        attr = _dot_escape(tree.attribute_names[node.feature])
        lines.append(f'  {name} [label="{attr} <= {node.threshold:g}"];')
        left = emit(node.left)
        right = emit(node.right)
        lines.append(f'  {name} -> {left} [label="true"];')
        lines.append(f'  {name} -> {right} [label="false"];')
        return name

    emit(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
