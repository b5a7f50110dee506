"""Learn discriminants that explain execution-time differences between program traces."""

from .benchgen import BenchSpec, generate
from .discriminant import Conjunction, Discriminant, accuracy, lab, likelihood, log_likelihood
from .dtree import DecisionTree, expand_weighted, export_dot, fit_tree, tree_to_discriminant
from .evaluation import EvalReport, evaluate, group_kfold
from .labeling import Clustering, LabeledCorpus, choose_k, kmeans_1d, label_corpus, weighted_labels
from .mlc import build_instance, learn_conjunctive, preprocess, solve_two_label
from .traces import Corpus, TraceRecord, extract_predicates, load_corpus, summarize_timing

__version__ = "0.1.0"
