"""Discriminants: ordered tuples of formulas, one per label, the last one ``true``.

A trace receives the label of the first formula it satisfies. Two formula
families are supported:

* :class:`Conjunction` -- a monotone conjunction of Boolean predicates,
  evaluated on a predicate vector (the empty conjunction is ``true``);
* :class:`PathDNF` -- a disjunction of root-to-leaf paths of a decision tree,
  each path a conjunction of ``count <= thr`` / ``count > thr`` tests,
  evaluated on a call-count vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "PROB_FLOOR",
    "Conjunction",
    "ThresholdTest",
    "PathDNF",
    "Discriminant",
    "lab",
    "label_all",
    "assigned_probabilities",
    "likelihood",
    "log_likelihood",
    "accuracy",
    "discriminant_report",
]

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Conjunction:
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(set(int(i) for i in self.indices))))

    @property
    def is_true(self) -> bool:
        return not self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def holds(self, x) -> bool:
        return all(x[i] for i in self.indices)

    def holds_rows(self, X: np.ndarray) -> np.ndarray:
        if not self.indices:
            return np.ones(X.shape[0], dtype=bool)
        return np.all(X[:, list(self.indices)].astype(bool), axis=1)

    def describe(self, names: Sequence[str]) -> list[str]:
        return [names[i] for i in self.indices]

    def __str__(self):
        return " & ".join(f"p{i}" for i in self.indices) or "true"


TRUE = Conjunction(())


@dataclass(frozen=True)
class ThresholdTest:
    attribute: int
    threshold: float
    le: bool  # True: count <= threshold; False: count > threshold

    def holds(self, x) -> bool:
        return (x[self.attribute] <= self.threshold) == self.le

    def holds_rows(self, X: np.ndarray) -> np.ndarray:
        return (X[:, self.attribute] <= self.threshold) == self.le

    def describe(self, names: Sequence[str]) -> str:
        op = "<=" if self.le else ">"
        return f"{names[self.attribute]} {op} {self.threshold:g}"


@dataclass(frozen=True)
class PathDNF:
    """Disjunction of conjunctions of threshold tests. No paths means ``false``."""

    paths: tuple[tuple[ThresholdTest, ...], ...] = ()

    def holds(self, x) -> bool:
        return any(all(t.holds(x) for t in path) for path in self.paths)

    def holds_rows(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0], dtype=bool)
        for path in self.paths:
            sat = np.ones(X.shape[0], dtype=bool)
            for t in path:
                sat &= t.holds_rows(X)
            out |= sat
        return out

    def describe(self, names: Sequence[str]) -> list[list[str]]:
        return [[t.describe(names) for t in path] for path in self.paths]


Formula = Union[Conjunction, PathDNF]


@dataclass(frozen=True)
class Discriminant:
    formulas: tuple[Formula, ...]
    attribute_names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.formulas) == 0:
            raise ValueError("a discriminant needs at least one formula")
        last = self.formulas[-1]
        if not (isinstance(last, Conjunction) and last.is_true):
            raise ValueError("the last formula of a discriminant must be `true`")

    @property
    def k(self) -> int:
        return len(self.formulas)

    def max_conjuncts(self) -> int:
        """Largest conjunction size among all but the final formula."""
        sizes = [len(f) for f in self.formulas[:-1] if isinstance(f, Conjunction)]
        return max(sizes, default=0)


def lab(x, psi: Discriminant) -> int:
    """0-based index of the first formula satisfied by ``x``."""
    for i, f in enumerate(psi.formulas):
        if f.holds(x):
            return i
    raise AssertionError("unreachable: the last formula is `true`")


def label_all(X: np.ndarray, psi: Discriminant) -> np.ndarray:
    X = np.asarray(X)
    labels = np.full(X.shape[0], psi.k - 1, dtype=np.int64)
    open_ = np.ones(X.shape[0], dtype=bool)
    for i, f in enumerate(psi.formulas[:-1]):
        hit = open_ & f.holds_rows(X)
        labels[hit] = i
        open_ &= ~hit
    return labels


def assigned_probabilities(psi: Discriminant, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """d_i(lab(x_i)) for every trace."""
    D = np.asarray(D, dtype=float)
    if D.shape[1] != psi.k:
        raise ValueError(f"distributions have {D.shape[1]} labels, discriminant has {psi.k}")
    labels = label_all(X, psi)
    return D[np.arange(len(labels)), labels]


def likelihood(psi: Discriminant, X: np.ndarray, D: np.ndarray) -> float:
    p = assigned_probabilities(psi, X, D)
    return float(math.prod(p.tolist()))


def log_likelihood(psi: Discriminant, X: np.ndarray, D: np.ndarray) -> float:
    p = assigned_probabilities(psi, X, D)
    return math.fsum(np.log(np.clip(p, PROB_FLOOR, 1.0)).tolist())


def accuracy(psi: Discriminant, X: np.ndarray, D: np.ndarray) -> float:
    p = assigned_probabilities(psi, X, D)
    return math.fsum(p.tolist()) / len(p)


def discriminant_report(psi: Discriminant, X: np.ndarray, D: np.ndarray, centers_s=None) -> dict:
    names = psi.attribute_names
    labels = []
    for i, f in enumerate(psi.formulas):
        entry = {"label": i}
        if centers_s is not None:
            entry["mean_time_s"] = float(centers_s[i])
        if isinstance(f, Conjunction):
            entry["kind"] = "conjunction"
            entry["formula"] = f.describe(names) if names else list(f.indices)
        else:
            entry["kind"] = "dnf"
            entry["formula"] = f.describe(names)
        labels.append(entry)
    lam = likelihood(psi, X, D)
    return {
        "labels": labels,
        "likelihood": lam,
        "log_likelihood": log_likelihood(psi, X, D),
        "accuracy": accuracy(psi, X, D),
    }
