"""Command-line entry point: ``discriminer <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 learner failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .benchgen import BenchSpec, generate
from .discriminant import discriminant_report
from .dtree import expand_weighted, export_dot, fit_tree, tree_to_discriminant
from .evaluation import LearnerError, evaluate, fit_learner, learner_attributes
from .labeling import DEFAULT_K_RANGE, Clustering, ClusteringError, LabeledCorpus, label_corpus
from .traces import Corpus, CorpusError, corpus_to_jsonl, load_corpus

log = logging.getLogger("discriminer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_LEARNER = 0, 1, 2, 3


class DataError(Exception):
    pass


class LearnFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage seed: the top-level seed hashed together with the stage name."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write_outputs(outputs: dict[Path, str]) -> None:
    """Write every output only after all of them have been produced."""
    for path, text in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)


def _emit(out: str | None, text: str, outputs: dict[Path, str]) -> None:
    if out:
        outputs[Path(out)] = text
    else:
        sys.stdout.write(text)


def _load_corpus(path: str) -> Corpus:
    try:
        return load_corpus(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except CorpusError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


# ---------------------------------------------------------------- clustering I/O

def clustering_to_dict(labeled: LabeledCorpus, seed: int) -> dict:
    c = labeled.clustering
    traces = []
    for tr, s, hard, w in zip(labeled.corpus.traces, labeled.corpus.summaries, c.assignment, labeled.distributions):
        traces.append({
            "id": tr.trace_id,
            "mean_s": s.mean_s,
            "std_s": s.std_s,
            "cluster": int(hard),
            "weights": [float(x) for x in w],
        })
    return {
        "k": c.k,
        "seed": seed,
        "centers_s": list(c.centers_s),
        "boundaries_s": list(c.boundaries_s),
        "inertia": c.inertia,
        "traces": traces,
    }


def labeled_from_dict(corpus: Corpus, data: dict, source: str = "labels") -> LabeledCorpus:
    try:
        k = int(data["k"])
        by_id = {t["id"]: t for t in data["traces"]}
        clustering = Clustering(
            k=k,
            centers_s=tuple(float(x) for x in data["centers_s"]),
            boundaries_s=tuple(float(x) for x in data["boundaries_s"]),
            assignment=tuple(int(by_id[t]["cluster"]) for t in corpus.ids),
            inertia=float(data.get("inertia", 0.0)),
        )
        D = np.array([[float(x) for x in by_id[t]["weights"]] for t in corpus.ids])
    except KeyError as exc:
        raise DataError(f"{source}: missing entry {exc}") from None
    except (TypeError, ValueError, ClusteringError) as exc:
        raise DataError(f"{source}: {exc}") from None
    if D.shape != (corpus.n, k):
        raise DataError(f"{source}: weight vectors must have {k} entries")
    if np.any(D < 0) or np.any(np.abs(D.sum(axis=1) - 1.0) > 1e-9):
        raise DataError(f"{source}: weight vectors must be distributions")
    return LabeledCorpus(corpus=corpus, clustering=clustering, distributions=D)


def scatter_csv(labeled: LabeledCorpus) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trace_id", "mean_s", "std_s", "cluster"])
    for tr, s, c in zip(labeled.corpus.traces, labeled.corpus.summaries, labeled.clustering.assignment):
        w.writerow([tr.trace_id, repr(s.mean_s), repr(s.std_s), c])
    return buf.getvalue()


# ---------------------------------------------------------------- subcommands

def cmd_benchgen(args, outputs):
    try:
        spec = BenchSpec(
            family=args.family,
            input_bits=args.bits,
            num_inputs=args.inputs,
            pattern=args.pattern or "",
            repeats=args.repeats,
            time_unit_ms=args.unit_ms,
            noise_std_ms=args.noise_ms,
            seed=derive_seed(args.seed, "benchgen"),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _emit(args.out, corpus_to_jsonl(generate(spec)), outputs)


def _parse_k(value: str):
    if value == "auto":
        return "auto"
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("k must be 'auto' or an integer") from None
    if k < 1:
        raise argparse.ArgumentTypeError("k must be >= 1")
    return k


def cmd_cluster(args, outputs):
    corpus = _load_corpus(args.input)
    seed = derive_seed(args.seed, "cluster")
    try:
        labeled = label_corpus(corpus, args.k, seed=seed, k_range=(args.k_min, args.k_max))
    except ClusteringError as exc:
        raise DataError(str(exc)) from None
    log.info("k=%d, centers_s=%s", labeled.k, [round(c, 6) for c in labeled.clustering.centers_s])
    _emit(args.out, _dumps(clustering_to_dict(labeled, args.seed)), outputs)
    scatter = args.scatter
    if scatter is None and args.out:
        scatter = str(Path(args.out).with_suffix(".csv"))
    if scatter:
        outputs[Path(scatter)] = scatter_csv(labeled)


def _labeled_input(args) -> LabeledCorpus:
    corpus = _load_corpus(args.input)
    return labeled_from_dict(corpus, _load_json(args.labels), args.labels)


def cmd_learn_dtree(args, outputs):
    labeled = _labeled_input(args)
    X, names = learner_attributes("dtree", labeled.corpus)
    try:
        tree = fit_tree(
            X,
            expand_weighted(labeled.distributions),
            labeled.k,
            names,
            max_depth=args.max_depth,
            min_leaf_weight=args.min_leaf_weight,
            centers_s=labeled.clustering.centers_s,
        )
        psi = tree_to_discriminant(tree)
    except Exception as exc:
        raise LearnFailure(str(exc)) from exc
    log.info("tree height %d, %d nodes", tree.height(), tree.node_count())
    model = {"kind": "dtree", **tree.to_dict()}
    model["training"] = discriminant_report(psi, X, labeled.distributions, labeled.clustering.centers_s)
    _emit(args.out, _dumps(model), outputs)
    if args.dot:
        outputs[Path(args.dot)] = export_dot(tree)


def cmd_learn_mlc(args, outputs):
    labeled = _labeled_input(args)
    P, names = learner_attributes("mlc", labeled.corpus)
    try:
        psi, res, _ = fit_learner("mlc", P, names, labeled.distributions, time_limit_s=args.time_limit_s)
    except Exception as exc:
        raise LearnFailure(str(exc)) from exc
    if not res.optimal:
        log.warning("time limit reached; reporting the best discriminant found")
    model = {
        "kind": "mlc",
        "attributes": list(names),
        "k": labeled.k,
        "optimal": res.optimal,
        "max_conjuncts": res.max_conjuncts,
        "degenerate_labels": res.degenerate_labels,
        "steps": [
            {
                "conjuncts": [names[j] for j in s.conjuncts],
                "log_likelihood": s.log_likelihood,
                "optimal": s.optimal,
                "nodes": s.nodes,
            }
            for s in res.steps
        ],
        "training": discriminant_report(psi, P, labeled.distributions, labeled.clustering.centers_s),
    }
    _emit(args.out, _dumps(model), outputs)


def cmd_eval(args, outputs):
    labeled = _labeled_input(args)
    try:
        report = evaluate(
            labeled, args.learner, k=args.k, seed=derive_seed(args.seed, "eval"), time_limit_s=args.time_limit_s
        )
    except LearnerError as exc:
        raise LearnFailure(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from None
    log.info("%s accuracy %.4f over %d folds", args.learner, report.accuracy, args.k)
    data = report.to_dict(timings=not args.no_timings)
    data["seed"] = args.seed
    _emit(args.out, _dumps(data), outputs)


def _formula_text(entry: dict) -> str:
    f = entry["formula"]
    if entry["kind"] == "conjunction":
        return " & ".join(str(x) for x in f) or "true"
    if not f:
        return "false"
    return " | ".join("(" + " & ".join(path) + ")" if path else "true" for path in f)


def render_report(clusters: dict, model: dict, evals: list[dict]) -> str:
    out = io.StringIO()
    k = clusters["k"]
    centers = clusters["centers_s"]
    bounds = [-float("inf"), *clusters["boundaries_s"], float("inf")]
    counts = [0] * k
    for t in clusters["traces"]:
        counts[t["cluster"]] += 1
    out.write(f"Time clusters: K={k}, traces={len(clusters['traces'])}\n")
    for i in range(k):
        out.write(f"  label {i}: mean {centers[i]:.6g} s, bucket ({bounds[i]:.6g}, {bounds[i + 1]:.6g}], {counts[i]} traces\n")
    kind = model.get("kind")
    train = model["training"]
    if kind == "dtree":
        out.write(f"\nDecision-tree discriminant (height {model['height']}):\n")
    else:
        opt = "optimal" if model.get("optimal") else "time limit hit, best incumbent"
        out.write(f"\nMax-likelihood conjunctive discriminant ({opt}, max conjuncts {model['max_conjuncts']}):\n")
    for entry in train["labels"]:
        out.write(f"  label {entry['label']} ({centers[entry['label']]:.6g} s): {_formula_text(entry)}\n")
    out.write(f"\nTraining: accuracy {train['accuracy']:.4f}, log-likelihood {train['log_likelihood']:.6g}\n")
    for ev in evals:
        agg = ev["aggregate"]
        size = f", max height {agg['tree_height']}" if agg.get("tree_height") is not None else ""
        if agg.get("max_conjuncts") is not None:
            size = f", max conjuncts {agg['max_conjuncts']}"
        out.write(f"Cross-validation ({ev['learner']}, {ev['k']} group folds): accuracy {agg['accuracy']:.4f}{size}\n")
    return out.getvalue()


def cmd_report(args, outputs):
    clusters = _load_json(args.labels)
    model = _load_json(args.model)
    evals = [_load_json(p) for p in args.eval or []]
    try:
        text = render_report(clusters, model, evals)
    except (KeyError, TypeError, IndexError) as exc:
        raise DataError(f"malformed input for report: {exc!r}") from None
    _emit(args.out, text, outputs)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="discriminer", description="Explain execution-time differences between program traces.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("benchgen", help="generate a micro-benchmark corpus")
    b.add_argument("--family", choices=["lsb0", "msb0", "pat"], required=True)
    b.add_argument("--pattern", help="bit pattern for the pat family")
    b.add_argument("--bits", type=int, required=True)
    b.add_argument("--inputs", type=int, required=True)
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--noise-ms", type=float, default=1.0)
    b.add_argument("--unit-ms", type=float, default=10.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchgen)

    c = sub.add_parser("cluster", help="cluster traces by mean time and assign weighted labels")
    c.add_argument("--input", required=True)
    c.add_argument("--k", type=_parse_k, default="auto")
    c.add_argument("--k-min", type=int, default=DEFAULT_K_RANGE[0])
    c.add_argument("--k-max", type=int, default=DEFAULT_K_RANGE[1])
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.add_argument("--scatter", help="scatter CSV path (default: --out with .csv suffix)")
    c.set_defaults(func=cmd_cluster)

    d = sub.add_parser("learn-dtree", help="learn a decision-tree discriminant")
    d.add_argument("--input", required=True)
    d.add_argument("--labels", required=True)
    d.add_argument("--out")
    d.add_argument("--dot")
    d.add_argument("--max-depth", type=int)
    d.add_argument("--min-leaf-weight", type=float, default=1e-3)
    d.set_defaults(func=cmd_learn_dtree)

    m = sub.add_parser("learn-mlc", help="learn a max-likelihood conjunctive discriminant")
    m.add_argument("--input", required=True)
    m.add_argument("--labels", required=True)
    m.add_argument("--out")
    m.add_argument("--time-limit-s", type=float)
    m.set_defaults(func=cmd_learn_mlc)

    e = sub.add_parser("eval", help="group k-fold cross-validation")
    e.add_argument("--input", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--learner", choices=["dtree", "mlc"], required=True)
    e.add_argument("--k", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.add_argument("--time-limit-s", type=float)
    e.add_argument("--no-timings", action="store_true", help="omit wall-clock times (byte-reproducible output)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="human-readable summary of clustering, discriminant and accuracy")
    r.add_argument("--labels", required=True)
    r.add_argument("--model", required=True, help="tree.json or mlc.json")
    r.add_argument("--eval", action="append", help="eval report JSON (repeatable)")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    outputs: dict[Path, str] = {}
    try:
        args.func(args, outputs)
    except DataError as exc:
        print(f"discriminer: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LearnFailure as exc:
        print(f"discriminer: learner failed: {exc}", file=sys.stderr)
        return EXIT_LEARNER
    _write_outputs(outputs)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
