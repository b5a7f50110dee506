"""Group k-fold cross-validation of the two discriminant learners."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .discriminant import accuracy
from .dtree import expand_weighted, fit_tree, tree_to_discriminant
from .labeling import LabeledCorpus
from .mlc import learn_conjunctive
from .traces import extract_predicates

__all__ = [
    "LearnerError",
    "FoldResult",
    "EvalReport",
    "group_kfold",
    "learner_attributes",
    "fit_learner",
    "evaluate",
]

LEARNERS = ("dtree", "mlc")


class LearnerError(RuntimeError):
    def __init__(self, fold: int, cause: BaseException):
        self.fold = fold
        super().__init__(f"learner failed on fold {fold}: {cause!r}")


def group_kfold(
    trace_ids: Sequence[str],
    k: int,
    seed: int = 0,
    group_of: Callable[[str], str] | None = None,
) -> list[int]:
    """Fold index per trace. Groups are shuffled by ``seed`` and dealt round-robin."""
    group_of = group_of or (lambda t: t)
    groups = [group_of(t) for t in trace_ids]
    distinct = sorted(set(groups))
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the number of groups ({len(distinct)})")
    order = np.random.default_rng(seed).permutation(len(distinct))
    fold_of = {distinct[g]: pos % k for pos, g in enumerate(order)}
    return [fold_of[g] for g in groups]


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    accuracy: float
    learn_time_s: float
    tree_height: int | None = None
    max_conjuncts: int | None = None
    optimal: bool | None = None


@dataclass
class EvalReport:
    learner: str
    k: int
    seed: int
    folds: list[FoldResult] = field(default_factory=list)
    fold_of: dict[str, int] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return float(np.mean([f.accuracy for f in self.folds]))

    @property
    def learn_time_s(self) -> float:
        return float(np.mean([f.learn_time_s for f in self.folds]))

    @property
    def tree_height(self) -> int | None:
        hs = [f.tree_height for f in self.folds if f.tree_height is not None]
        return max(hs) if hs else None

    @property
    def max_conjuncts(self) -> int | None:
        ms = [f.max_conjuncts for f in self.folds if f.max_conjuncts is not None]
        return max(ms) if ms else None

    def to_dict(self, timings: bool = True) -> dict:
        folds = []
        for f in self.folds:
            d = asdict(f)
            if not timings:
                d.pop("learn_time_s")
            folds.append(d)
        agg = {
            "accuracy": self.accuracy,
            "tree_height": self.tree_height,
            "max_conjuncts": self.max_conjuncts,
        }
        if timings:
            agg["learn_time_s"] = self.learn_time_s
        return {
            "learner": self.learner,
            "k": self.k,
            "seed": self.seed,
            "aggregate": agg,
            "folds": folds,
            "fold_of": self.fold_of,
        }


def learner_attributes(learner: str, corpus) -> tuple[np.ndarray, tuple[str, ...]]:
    """Attribute matrix a learner works on: call counts (dtree) or called-once predicates (mlc)."""
    if learner == "dtree":
        return corpus.count_matrix(), corpus.methods
    if learner == "mlc":
        table = extract_predicates(corpus)
        return table.values, table.names
    raise ValueError(f"unknown learner {learner!r}")


def fit_learner(
    learner: str,
    X: np.ndarray,
    names: Sequence[str],
    D: np.ndarray,
    centers_s: Sequence[float] | None = None,
    time_limit_s: float | None = None,
):
    """Fit on (X, D); return the discriminant, the fitted model and its size metrics."""
    k = D.shape[1]
    if learner == "dtree":
        tree = fit_tree(X, expand_weighted(D), k, names, centers_s=centers_s)
        return tree_to_discriminant(tree), tree, {"tree_height": tree.height()}
    if learner == "mlc":
        res = learn_conjunctive(X, D, names=names, time_limit_s=time_limit_s)
        return res.discriminant, res, {"max_conjuncts": res.max_conjuncts, "optimal": res.optimal}
    raise ValueError(f"unknown learner {learner!r}")


def evaluate(
    labeled: LabeledCorpus,
    learner: str,
    k: int = 20,
    seed: int = 0,
    group_of: Callable[[str], str] | None = None,
    time_limit_s: float | None = None,
) -> EvalReport:
    if learner not in LEARNERS:
        raise ValueError(f"unknown learner {learner!r}")
    ids = labeled.corpus.ids
    X, names = learner_attributes(learner, labeled.corpus)
    D = labeled.distributions
    folds = np.asarray(group_kfold(ids, k, seed=seed, group_of=group_of))
    report = EvalReport(learner=learner, k=k, seed=seed, fold_of=dict(zip(ids, folds.tolist())))
    for f in range(k):
        train = np.flatnonzero(folds != f)
        test = np.flatnonzero(folds == f)
        try:
            t0 = time.perf_counter()
            psi, _, metrics = fit_learner(
                learner, X[train], names, D[train], labeled.clustering.centers_s, time_limit_s
            )
            elapsed = time.perf_counter() - t0
        except Exception as exc:
            raise LearnerError(f, exc) from exc
        acc = accuracy(psi, X[test], D[test])
        report.folds.append(
            FoldResult(fold=f, n_train=len(train), n_test=len(test), accuracy=acc, learn_time_s=elapsed, **metrics)
        )
    return report
