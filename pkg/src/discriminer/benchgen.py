"""Synthetic micro-benchmark corpora with a timing side channel.

Inputs are random bit-strings. Depending on the family, an input determines
which methods ``F_j`` are called and a mean running time:

* ``lsb0`` -- ``F_p`` for p the position of the least significant 0 bit,
  mean ``unit * (p + 1)``;
* ``msb0`` -- same with the most significant 0 bit;
* ``pat`` -- with ``i`` the leftmost occurrence of the pattern in the input
  (written most significant bit first), methods ``F_i .. F_{i+|d|-1}`` with
  per-method mean ``unit * j``, summed.

Inputs with no qualifying position call ``F_none`` with mean ``unit``.
Timings are sampled from N(mean, noise^2) instead of executing anything.
Every trace records a count for each of the program's ``F_j`` (0 when not
called), so the method universe is the program's, not just the observed calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .traces import Corpus, TraceRecord

__all__ = ["BenchSpec", "SENTINEL", "method_names", "called_methods", "generate"]

SENTINEL = "F_none"
FAMILIES = ("lsb0", "msb0", "pat")
_MIN_TIME_S = 1e-9


@dataclass(frozen=True)
class BenchSpec:
    family: str
    input_bits: int
    num_inputs: int
    pattern: str = ""
    repeats: int = 10
    time_unit_ms: float = 10.0
    noise_std_ms: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown benchmark family {self.family!r}")
        if self.family == "pat":
            if not self.pattern or set(self.pattern) - {"0", "1"}:
                raise ValueError("pattern must be a non-empty bit-string")
            if self.input_bits < len(self.pattern):
                raise ValueError("input_bits must be at least the pattern length")
        if self.input_bits < 1 or self.num_inputs < 1 or self.repeats < 1:
            raise ValueError("input_bits, num_inputs and repeats must be >= 1")
        if self.time_unit_ms <= 0 or self.noise_std_ms < 0:
            raise ValueError("time_unit_ms must be > 0 and noise_std_ms >= 0")

    @property
    def name(self) -> str:
        return f"Pat_{self.pattern}" if self.family == "pat" else self.family.upper()


def method_names(bits: int) -> list[str]:
    width = len(str(bits - 1))
    return [f"F{j:0{width}d}" for j in range(bits)]


def called_methods(spec: BenchSpec, msb_first: str) -> tuple[list[int], float]:
    """Indices of the called ``F_j`` (empty means the sentinel) and the mean time in ms."""
    unit = spec.time_unit_ms
    if spec.family in ("lsb0", "msb0"):
        # position p counts from the least significant bit
        zeros = [spec.input_bits - 1 - s for s, ch in enumerate(msb_first) if ch == "0"]
        if not zeros:
            return [], unit
        p = min(zeros) if spec.family == "lsb0" else max(zeros)
        return [p], unit * (p + 1)
    i = msb_first.find(spec.pattern)
    if i < 0:
        return [], unit
    js = list(range(i, i + len(spec.pattern)))
    return js, unit * sum(js)


def generate(spec: BenchSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    names = method_names(spec.input_bits)
    bits = rng.integers(0, 2, size=(spec.num_inputs, spec.input_bits))
    width = len(str(spec.num_inputs - 1))
    traces = []
    for n, row in enumerate(bits):
        msb_first = "".join("1" if b else "0" for b in row)
        js, mean_ms = called_methods(spec, msb_first)
        counts = {name: 0 for name in names}
        if js:
            for j in js:
                counts[names[j]] = 1
        else:
            counts[SENTINEL] = 1
        draws = rng.normal(mean_ms, spec.noise_std_ms, size=spec.repeats) if spec.noise_std_ms > 0 \
            else np.full(spec.repeats, mean_ms)
        timings = tuple(float(max(t / 1000.0, _MIN_TIME_S)) for t in draws)
        traces.append(TraceRecord(f"in{n:0{width}d}", counts, timings))
    return Corpus(tuple(traces))
