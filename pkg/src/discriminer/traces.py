"""Trace records, timing summaries, predicate extraction and corpus I/O.

A corpus file is newline-delimited JSON with one trace per line::

    {"id": "in0001", "counts": {"F3": 1, "F4": 1}, "timings_s": [0.031, 0.029]}

Exactly the keys ``id``, ``counts`` and ``timings_s`` are accepted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "CorpusError",
    "TraceRecord",
    "TimingSummary",
    "LabelDistribution",
    "PredicateTable",
    "Corpus",
    "summarize_timing",
    "parse_corpus",
    "load_corpus",
    "corpus_to_jsonl",
    "write_corpus",
    "extract_predicates",
]

RECORD_KEYS = frozenset({"id", "counts", "timings_s"})


class CorpusError(ValueError):
    """Malformed, empty or inconsistent trace corpus."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TimingSummary:
    mean_s: float
    std_s: float


@dataclass(frozen=True)
class TraceRecord:
    trace_id: str
    method_counts: Mapping[str, int]
    timings_s: tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.trace_id, str) or not self.trace_id:
            raise CorpusError("trace id must be a non-empty string")
        for name, count in self.method_counts.items():
            if not isinstance(name, str):
                raise CorpusError(f"{self.trace_id}: method name must be a string")
            if isinstance(count, bool) or not isinstance(count, (int, np.integer)) or count < 0:
                raise CorpusError(f"{self.trace_id}: count for {name!r} must be an integer >= 0")
        if len(self.timings_s) == 0:
            raise CorpusError(f"{self.trace_id}: timings_s must be non-empty")
        for t in self.timings_s:
            if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t <= 0:
                raise CorpusError(f"{self.trace_id}: timings must be finite numbers > 0")

    def count(self, method: str) -> int:
        return int(self.method_counts.get(method, 0))

    @property
    def summary(self) -> TimingSummary:
        return summarize_timing(self)


def summarize_timing(trace: TraceRecord) -> TimingSummary:
    """Sample mean and population standard deviation (divisor M) of the timings."""
    ts = np.asarray(trace.timings_s, dtype=float)
    mean = math.fsum(ts) / len(ts)
    var = math.fsum((ts - mean) ** 2) / len(ts)
    return TimingSummary(mean_s=mean, std_s=math.sqrt(var))


@dataclass(frozen=True)
class LabelDistribution:
    """Discrete distribution over K ordered labels."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) == 0:
            raise ValueError("label distribution needs at least one label")
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            raise ValueError(f"label probabilities must lie in [0, 1]: {self.probs}")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"label probabilities must sum to 1: {self.probs}")

    @property
    def k(self) -> int:
        return len(self.probs)

    def __getitem__(self, label: int) -> float:
        return self.probs[label]


@dataclass(frozen=True)
class PredicateTable:
    """Truth values of m atomic predicates for each of N traces (rows follow corpus order)."""

    names: tuple[str, ...]
    values: np.ndarray  # (N, m) bool

    @property
    def m(self) -> int:
        return len(self.names)

    def vector(self, i: int) -> np.ndarray:
        return self.values[i]


@dataclass(frozen=True)
class Corpus:
    traces: tuple[TraceRecord, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.traces) == 0:
            raise CorpusError("corpus contains no traces")
        index = {}
        for i, tr in enumerate(self.traces):
            if tr.trace_id in index:
                raise CorpusError(f"duplicate trace id {tr.trace_id!r}")
            index[tr.trace_id] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def n(self) -> int:
        return len(self.traces)

    @property
    def ids(self) -> list[str]:
        return [tr.trace_id for tr in self.traces]

    def position(self, trace_id: str) -> int:
        return self._index[trace_id]

    @property
    def summaries(self) -> list[TimingSummary]:
        return [summarize_timing(tr) for tr in self.traces]

    def mean_times(self) -> np.ndarray:
        return np.array([s.mean_s for s in self.summaries])

    @property
    def methods(self) -> tuple[str, ...]:
        """Every method name recorded by at least one trace, sorted."""
        names = set()
        for tr in self.traces:
            names.update(tr.method_counts)
        return tuple(sorted(names))

    def count_matrix(self, methods: Sequence[str] | None = None) -> np.ndarray:
        if methods is None:
            methods = self.methods
        col = {name: j for j, name in enumerate(methods)}
        X = np.zeros((self.n, len(methods)), dtype=np.int64)
        for i, tr in enumerate(self.traces):
            for name, c in tr.method_counts.items():
                j = col.get(name)
                if j is not None:
                    X[i, j] = c
        return X

    def subset(self, trace_ids: Iterable[str]) -> "Corpus":
        return Corpus(tuple(self.traces[self._index[t]] for t in trace_ids))


def _parse_record(obj, lineno: int) -> TraceRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record must be a JSON object", lineno)
    keys = set(obj)
    if keys != RECORD_KEYS:
        extra = sorted(keys - RECORD_KEYS)
        missing = sorted(RECORD_KEYS - keys)
        parts = []
        if extra:
            parts.append(f"unknown keys {extra}")
        if missing:
            parts.append(f"missing keys {missing}")
        raise CorpusError("; ".join(parts), lineno)
    counts = obj["counts"]
    timings = obj["timings_s"]
    if not isinstance(counts, dict):
        raise CorpusError("'counts' must be an object", lineno)
    if not isinstance(timings, list):
        raise CorpusError("'timings_s' must be an array", lineno)
    try:
        return TraceRecord(obj["id"], dict(counts), tuple(timings))
    except CorpusError as exc:
        raise CorpusError(str(exc), lineno) from None


def parse_corpus(lines: Iterable[str]) -> Corpus:
    traces = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from None
        rec = _parse_record(obj, lineno)
        if rec.trace_id in seen:
            raise CorpusError(
                f"duplicate trace id {rec.trace_id!r} (first seen on line {seen[rec.trace_id]})", lineno
            )
        seen[rec.trace_id] = lineno
        traces.append(rec)
    if not traces:
        raise CorpusError("corpus file contains no trace records")
    return Corpus(tuple(traces))


def load_corpus(path: str | Path) -> Corpus:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    return parse_corpus(text.splitlines())


def corpus_to_jsonl(corpus: Corpus) -> str:
    out = []
    for tr in corpus.traces:
        rec = {
            "id": tr.trace_id,
            "counts": {k: int(tr.method_counts[k]) for k in sorted(tr.method_counts)},
            "timings_s": [float(t) for t in tr.timings_s],
        }
        out.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(out) + "\n"


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(corpus_to_jsonl(corpus), encoding="utf-8")


def extract_predicates(corpus: Corpus, mode: str | Sequence[int] = "called-once") -> PredicateTable:
    """Boolean predicates over method call counts.

    ``"called-once"`` yields one predicate per method, true iff the method was
    called at least once. A list of thresholds ``[c1, c2, ...]`` yields the
    predicates ``count(f) > c`` for every method and threshold.
    """
    methods = corpus.methods
    X = corpus.count_matrix(methods)
    if isinstance(mode, str):
        if mode != "called-once":
            raise ValueError(f"unknown predicate mode {mode!r}")
        return PredicateTable(names=methods, values=X > 0)
    thresholds = sorted(set(int(c) for c in mode))
    if not thresholds:
        raise ValueError("count-threshold mode needs at least one threshold")
    names = []
    cols = []
    for j, name in enumerate(methods):
        for c in thresholds:
            names.append(f"{name}>{c}")
            cols.append(X[:, j] > c)
    return PredicateTable(names=tuple(names), values=np.column_stack(cols))
