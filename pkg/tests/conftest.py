import numpy as np
import pytest

from discriminer.traces import Corpus, TraceRecord

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_corpus(rows, timings=None):
    """Corpus from a list of {method: count} dicts; default timings are 1.0 s."""
    traces = []
    for i, counts in enumerate(rows):
        ts = (1.0,) if timings is None else tuple(timings[i])
        traces.append(TraceRecord(f"t{i}", dict(counts), ts))
    return Corpus(tuple(traces))


def two_filter_corpus(n=240, seed=0, noise_s=0.05):
    """Image-sharing style traces: the filter chosen per profile sets the time.

    no filter -> 2 s, Filter.filter with one of three cheap filters -> 8 s,
    Filter.filter & OilFilter.filterPixels -> 15.7 s. Unrelated methods are
    called at random.
    """
    rng = np.random.default_rng(seed)
    noise_methods = [f"util.Helper{j}.run" for j in range(12)]
    cheap = ["image.ChromeFilter.filter", "image.SepiaFilter.filter", "image.BlurFilter.filter"]
    traces = []
    for i in range(n):
        kind = rng.integers(3)
        counts = {m: int(rng.integers(0, 4)) for m in noise_methods}
        counts["snapservice.model.Filter.filter"] = 0 if kind == 0 else 1
        pick = rng.integers(len(cheap))
        for j, name in enumerate(cheap):
            counts[name] = 1 if kind == 1 and j == pick else 0
        counts["image.OilFilter.filterPixels"] = int(rng.integers(200, 400)) if kind == 2 else 0
        mean = (2.0, 8.0, 15.7)[kind]
        ts = tuple(float(t) for t in rng.normal(mean, noise_s, size=10))
        traces.append(TraceRecord(f"profile{i:03d}", counts, ts))
    return Corpus(tuple(traces))


@pytest.fixture
def filter_corpus():
    return two_filter_corpus()
