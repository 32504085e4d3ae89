"""Pooling-based test collection simulation, reusability measurement and prediction."""

from .metrics import Leaderboard, MetricId, average_precision, evaluate_runs, ndcg_at_k
from .pooling import Pool, PoolStats, build_pool, construct_qrels, pool_stats
from .predictor import FeatureRow, RegressionModel, fit_ols, loto, mse, predict
from .rankcorr import AgreementReport, RankingPair, agreement, curve_auc, kendall_tau, max_drop, pearson, tau_ap
from .simulator import (
    ExperimentConfig,
    LearningCurve,
    TopicStrata,
    TrialRecord,
    aggregate_curves,
    filter_runs,
    run_experiment,
    sample_groups,
    stratified_sample_topics,
)
from .synthkit import SynthSpec, generate, known_ranking_fixture
from .trec_io import (
    CollectionMeta,
    GroupManifest,
    Qrels,
    Run,
    RunKind,
    load_manifest,
    parse_qrels,
    parse_run_file,
    serialize_qrels,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "CollectionMeta",
    "ExperimentConfig",
    "FeatureRow",
    "GroupManifest",
    "Leaderboard",
    "LearningCurve",
    "MetricId",
    "Pool",
    "PoolStats",
    "Qrels",
    "RankingPair",
    "RegressionModel",
    "Run",
    "RunKind",
    "SynthSpec",
    "TopicStrata",
    "TrialRecord",
    "aggregate_curves",
    "agreement",
    "average_precision",
    "build_pool",
    "construct_qrels",
    "curve_auc",
    "evaluate_runs",
    "filter_runs",
    "fit_ols",
    "generate",
    "kendall_tau",
    "known_ranking_fixture",
    "load_manifest",
    "loto",
    "max_drop",
    "mse",
    "ndcg_at_k",
    "parse_qrels",
    "parse_run_file",
    "pearson",
    "pool_stats",
    "predict",
    "run_experiment",
    "sample_groups",
    "serialize_qrels",
    "stratified_sample_topics",
    "tau_ap",
]

