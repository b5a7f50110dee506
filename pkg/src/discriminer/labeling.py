"""Time-domain clustering and Gaussian weighted labeling of traces.

Traces are clustered on their mean execution time with 1-D k-means. Labels
are the clusters sorted by ascending center. Consecutive clusters are
separated by a bucket boundary halfway between the slowest member of the
faster cluster and the fastest member of the slower one, and a trace with
timing ``N(t, sigma^2)`` gets the probability mass falling in each bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .traces import Corpus

__all__ = [
    "ClusteringError",
    "Clustering",
    "normal_cdf",
    "gaussian_interval_mass",
    "kmeans_1d",
    "silhouette_1d",
    "choose_k",
    "bucket_boundaries",
    "bucket_of",
    "weighted_labels",
    "LabeledCorpus",
    "label_corpus",
]

MAX_ITER = 300
N_RESTARTS = 10
DEFAULT_K_RANGE = (2, 8)
_SQRT2 = math.sqrt(2.0)


class ClusteringError(ValueError):
    pass


def normal_cdf(z: float) -> float:
    if z == math.inf:
        return 1.0
    if z == -math.inf:
        return 0.0
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-z / _SQRT2)


def _upper_tail(z: float) -> float:
    return normal_cdf(-z)


def gaussian_interval_mass(lo: float, hi: float, mean: float, std: float) -> float:
    """P(lo < X <= hi) for X ~ N(mean, std^2), std > 0."""
    zl = (lo - mean) / std
    zh = (hi - mean) / std
    if zl >= 0.0:
        return max(_upper_tail(zl) - _upper_tail(zh), 0.0)
    return max(normal_cdf(zh) - normal_cdf(zl), 0.0)


@dataclass(frozen=True)
class Clustering:
    k: int
    centers_s: tuple[float, ...]
    boundaries_s: tuple[float, ...]
    assignment: tuple[int, ...]
    inertia: float = 0.0

    def __post_init__(self):
        if len(self.centers_s) != self.k or len(self.boundaries_s) != self.k - 1:
            raise ClusteringError("clustering shape mismatch")


def _sse(x: np.ndarray, assign: np.ndarray, centers: np.ndarray) -> float:
    return float(np.sum((x - centers[assign]) ** 2))


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    uniq = np.unique(x)
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:
            # every point coincides with a center; fall back to an unused value
            unused = np.setdiff1d(uniq, centers)
            centers.append(unused[rng.integers(len(unused))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.sort(np.asarray(centers, dtype=float))


def _nearest(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # centers are sorted; ties go to the lower center
    return np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    history = []
    assign = _nearest(x, centers)
    for _ in range(max_iter):
        history.append(_sse(x, assign, centers))
        new = centers.copy()
        for c in range(len(centers)):
            members = x[assign == c]
            if len(members):
                new[c] = members.mean()
        empty = [c for c in range(len(centers)) if not np.any(assign == c)]
        if empty:
            # re-seed an empty cluster at the worst-fit point
            far = np.argsort(-(x - new[assign]) ** 2)
            for c, i in zip(empty, far):
                new[c] = x[i]
        new = np.sort(new)
        new_assign = _nearest(x, new)
        if np.array_equal(new, centers) and np.array_equal(new_assign, assign):
            break
        centers, assign = new, new_assign
    history.append(_sse(x, assign, centers))
    return centers, assign, history


def kmeans_1d(
    means_s: Sequence[float],
    k: int,
    seed: int = 0,
    n_restarts: int = N_RESTARTS,
    max_iter: int = MAX_ITER,
    return_history: bool = False,
):
    """Lloyd's algorithm on 1-D points with k-means++ seeding.

    The best of ``n_restarts`` runs (lowest within-cluster sum of squares) is
    kept. Clusters are numbered by ascending center.
    """
    x = np.asarray(means_s, dtype=float)
    if k < 1:
        raise ClusteringError("k must be >= 1")
    n_distinct = len(np.unique(x))
    if k > n_distinct:
        raise ClusteringError(f"k={k} exceeds the number of distinct values ({n_distinct})")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_restarts if k > 1 else 1):
        centers, assign, history = _lloyd(x, _kmeanspp_init(x, k, rng), max_iter)
        sse = history[-1]
        if best is None or sse < best[2]:
            best = (centers, assign, sse, history)
    centers, assign, sse, history = best
    # recompute centers from the final (contiguous) assignment
    centers = np.array([x[assign == c].mean() for c in range(k)])
    boundaries = bucket_boundaries(x, assign, k)
    clustering = Clustering(
        k=k,
        centers_s=tuple(float(c) for c in centers),
        boundaries_s=tuple(boundaries),
        assignment=tuple(int(a) for a in assign),
        inertia=_sse(x, assign, centers),
    )
    if return_history:
        return clustering, history
    return clustering


def bucket_boundaries(means_s: Sequence[float], assignment: Sequence[int], k: int) -> list[float]:
    """Edge between clusters i and i+1: (max of cluster i + min of cluster i+1) / 2."""
    x = np.asarray(means_s, dtype=float)
    a = np.asarray(assignment)
    lows, highs = [], []
    for c in range(k):
        members = x[a == c]
        if len(members) == 0:
            raise ClusteringError(f"cluster {c} is empty")
        lows.append(members.min())
        highs.append(members.max())
    bounds = [(highs[c] + lows[c + 1]) / 2.0 for c in range(k - 1)]
    for c in range(k - 2):
        if not bounds[c] < bounds[c + 1]:
            raise ClusteringError("clusters overlap; bucket boundaries are not increasing")
    return [float(b) for b in bounds]


def silhouette_1d(x: Sequence[float], labels: Sequence[int]) -> float:
    """Mean silhouette coefficient with absolute distance, via prefix sums.

    Points in singleton clusters score 0.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ClusteringError("silhouette needs at least two clusters")
    # dist_sum[c][i] = sum_{y in cluster c} |x_i - y|
    sums = np.empty((len(uniq), len(x)))
    sizes = np.empty(len(uniq))
    for ci, c in enumerate(uniq):
        ys = np.sort(x[labels == c])
        pref = np.concatenate(([0.0], np.cumsum(ys)))
        pos = np.searchsorted(ys, x, side="right")
        below = pos * x - pref[pos]
        above = (pref[-1] - pref[pos]) - (len(ys) - pos) * x
        sums[ci] = below + above
        sizes[ci] = len(ys)
    own = np.searchsorted(uniq, labels)
    n_own = sizes[own]
    a = np.where(n_own > 1, sums[own, np.arange(len(x))] / np.maximum(n_own - 1, 1), 0.0)
    mean_d = sums / sizes[:, None]
    mean_d[own, np.arange(len(x))] = np.inf
    b = mean_d.min(axis=0)
    denom = np.maximum(a, b)
    s = np.where((n_own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def choose_k(
    means_s: Sequence[float], k_range: tuple[int, int] = DEFAULT_K_RANGE, seed: int = 0
) -> int:
    """k in the inclusive range with the best mean silhouette; ties go to the smaller k."""
    x = np.asarray(means_s, dtype=float)
    lo, hi = k_range
    lo = max(lo, 2)
    hi = min(hi, len(np.unique(x)))
    if lo > hi:
        raise ClusteringError(f"no feasible k in {k_range} for {len(np.unique(x))} distinct values")
    best_k, best_s = None, -math.inf
    for k in range(lo, hi + 1):
        s = silhouette_1d(x, kmeans_1d(x, k, seed=seed).assignment)
        if s > best_s + 1e-12:
            best_k, best_s = k, s
    return best_k


def bucket_of(t: float, boundaries_s: Sequence[float]) -> int:
    """Index i with t in (b_{i-1}, b_i]."""
    for i, b in enumerate(boundaries_s):
        if t <= b:
            return i
    return len(boundaries_s)


def weighted_labels(mean_s: float, std_s: float, boundaries_s: Sequence[float]) -> np.ndarray:
    """Gaussian probability mass of N(mean_s, std_s^2) in each bucket."""
    k = len(boundaries_s) + 1
    if std_s <= 0.0:
        probs = np.zeros(k)
        probs[bucket_of(mean_s, boundaries_s)] = 1.0
        return probs
    edges = [-math.inf, *boundaries_s, math.inf]
    probs = np.array([gaussian_interval_mass(edges[i], edges[i + 1], mean_s, std_s) for i in range(k)])
    total = math.fsum(probs)
    return probs / total


@dataclass(frozen=True)
class LabeledCorpus:
    """A corpus together with its clustering and per-trace label distributions."""

    corpus: Corpus
    clustering: Clustering
    distributions: np.ndarray  # (N, K)

    @property
    def k(self) -> int:
        return self.clustering.k

    def hard_labels(self) -> np.ndarray:
        return np.asarray(self.clustering.assignment)

    def subset_rows(self, rows: Sequence[int]) -> np.ndarray:
        return self.distributions[np.asarray(rows)]


def label_corpus(
    corpus: Corpus,
    k: int | str = "auto",
    seed: int = 0,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
) -> LabeledCorpus:
    summaries = corpus.summaries
    means = np.array([s.mean_s for s in summaries])
    if k == "auto":
        k = choose_k(means, k_range, seed=seed)
    clustering = kmeans_1d(means, int(k), seed=seed)
    D = np.vstack([weighted_labels(s.mean_s, s.std_s, clustering.boundaries_s) for s in summaries])
    return LabeledCorpus(corpus=corpus, clustering=clustering, distributions=D)
