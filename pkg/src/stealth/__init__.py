"""Audit black-box classifiers with a sqrt(N) label budget."""

from .adversary import PerturbConfig, Scaffold
from .cluster import ClusterConfig, bicluster, sample_leaves
from .data import Dataset, Schema, encode_normalize, load_csv, synth_biased, tri_split
from .explain import ExplainConfig, influential_set, jaccard, lime_explain
from .learners import ForestConfig, Predictor, train_forest, train_tree
from .metrics import MetricReport, score
from .pipeline import ExperimentConfig, run_experiment, run_rq1, run_rq2_rq3

__all__ = [
    "ClusterConfig", "Dataset", "ExperimentConfig", "ExplainConfig", "ForestConfig",
    "MetricReport", "PerturbConfig", "Predictor", "Scaffold", "Schema", "bicluster",
    "encode_normalize", "influential_set", "jaccard", "lime_explain", "load_csv",
    "run_experiment", "run_rq1", "run_rq2_rq3", "sample_leaves", "score", "synth_biased",
    "train_forest", "train_tree", "tri_split",
]
__version__ = "0.1.0"
