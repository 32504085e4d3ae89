"""Group down-sampling experiments: simulated pools, reusability trials and learning curves.

For every (topic sample size m, pool depth p, metric) the reference leaderboard is
computed from the official qrels restricted to the sampled topics. Then, for every
group count g and sample index i, g groups are drawn, their runs are pooled at depth
p over the sampled topics, and *all* runs are re-scored against the resulting qrels.
The two leaderboards are compared with tau, tau_ap and max drop.

Every trial draws from its own random stream keyed on (seed, m, p, metric, g, i), so
results do not depend on execution order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._fmt import fmt_float, json_float
from .metrics import EmptyEffectiveTopicSet, Leaderboard, MetricId, evaluate_runs, rank_scores
from .pooling import build_pool, construct_qrels, pool_stats
from .rankcorr import RankingPair, UndefinedCorrelation, curve_auc, kendall_tau, max_drop, pearson, tau_ap
from .trec_io import CollectionMeta, Qrels, Run, RunKind

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_TOPIC_STREAM = 1
_GROUP_STREAM = 2
_NESTED_STREAM = 3
_METRIC_CODE = {MetricId.MAP_1000: 0, MetricId.NDCG_10: 1}

DEFAULT_SAMPLES = 4


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([k & _MASK64 for k in key]))


@dataclass(frozen=True)
class TopicStrata:
    strata: tuple[tuple[str, frozenset[str]], ...]

    def __post_init__(self):
        if not self.strata:
            raise ValueError("at least one stratum is required")
        seen: set[str] = set()
        for label, topics in self.strata:
            if not topics:
                raise ValueError(f"stratum {label!r} is empty")
            overlap = seen & topics
            if overlap:
                raise ValueError(f"stratum {label!r} repeats topics: {sorted(overlap)[:5]}")
            seen |= topics

    @property
    def topics(self) -> frozenset[str]:
        return frozenset().union(*(t for _, t in self.strata))

    @classmethod
    def single(cls, topics: Iterable[str], label: str = "all") -> "TopicStrata":
        return cls(((label, frozenset(topics)),))

    @classmethod
    def from_meta(cls, meta: CollectionMeta) -> "TopicStrata":
        if not meta.strata:
            return cls.single(meta.topics)
        strata = cls(tuple((lbl, frozenset(ts)) for lbl, ts in meta.strata))
        if strata.topics != meta.topics:
            raise ValueError("strata must cover exactly the collection's topics")
        return strata


@dataclass(frozen=True)
class ExperimentConfig:
    n_samples: int = DEFAULT_SAMPLES
    # None means every group count 1..|G|, every topic (one size), the official depth
    group_counts: tuple[int, ...] | None = None
    topic_sample_sizes: tuple[int, ...] | None = None
    pool_depths: tuple[int, ...] | None = None
    metrics: tuple[MetricId, ...] = (MetricId.MAP_1000, MetricId.NDCG_10)
    include_manual: bool = True
    seed: int = 0
    # redraw the topic sample for every (p, metric, g, i) instead of once per (m, i)
    redraw_topics: bool = False
    # nested group samples: the g-group sample is a prefix of one permutation per (m, i)
    nested_groups: bool = False

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(MetricId.parse(m) for m in self.metrics))
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.metrics:
            raise ValueError("at least one metric is required")
        for name in ("group_counts", "topic_sample_sizes", "pool_depths"):
            values = getattr(self, name)
            if values is None:
                continue
            values = tuple(sorted(set(int(v) for v in values)))
            if not values:
                raise ValueError(f"{name} must not be empty")
            if values[0] < 1:
                raise ValueError(f"{name} values must be >= 1")
            object.__setattr__(self, name, values)


@dataclass(frozen=True)
class TrialRecord:
    group_count: int
    sample_index: int
    sampled_groups: tuple[str, ...]
    topic_size: int
    depth: int
    metric: MetricId
    include_manual: bool
    tau: float
    tau_ap: float
    max_drop: int
    unique_relevant: int

    @property
    def curve_key(self) -> tuple[int, int, MetricId, bool]:
        return (self.topic_size, self.depth, self.metric, self.include_manual)

    @property
    def sort_key(self):
        return (self.topic_size, self.depth, self.metric.value, self.include_manual, self.group_count, self.sample_index)


@dataclass(frozen=True)
class CurvePoint:
    g: int
    mean_tau_ap: float
    mean_max_drop: float
    mean_unique_relevant: float
    mean_tau: float


@dataclass(frozen=True)
class LearningCurve:
    key: tuple[int, int, MetricId, bool]
    points: tuple[CurvePoint, ...]
    auc_tau_ap: float | None
    auc_max_drop: float | None
    pearson_tau_ap: float | None
    pearson_max_drop: float | None
    n_samples: int = 0

    @property
    def topic_size(self) -> int:
        return self.key[0]

    @property
    def depth(self) -> int:
        return self.key[1]

    @property
    def metric(self) -> MetricId:
        return self.key[2]

    @property
    def include_manual(self) -> bool:
        return self.key[3]

    @property
    def slug(self) -> str:
        manual = "manual" if self.include_manual else "automatic"
        return f"m{self.topic_size}_p{self.depth}_{self.metric.value}_{manual}"


def filter_runs(runs: Iterable[Run], include_manual: bool) -> list[Run]:
    runs = list(runs)
    if include_manual:
        return runs
    return [r for r in runs if r.kind is RunKind.AUTOMATIC]


def sample_groups(all_groups: Sequence[str], g: int, rng: np.random.Generator) -> tuple[str, ...]:
    """Uniform sample of ``g`` groups without replacement, returned in ``all_groups`` order."""
    n = len(all_groups)
    if not 1 <= g <= n:
        raise ValueError(f"group count {g} outside [1, {n}]")
    picked = rng.choice(n, size=g, replace=False)
    return tuple(all_groups[k] for k in sorted(picked.tolist()))


def stratum_quotas(sizes: Sequence[int], m: int) -> list[int]:
    """Proportional allocation of ``m`` by largest remainder; ties go to the earlier stratum."""
    total = sum(sizes)
    if m <= 0:
        raise ValueError("topic sample size must be positive")
    if m > total:
        raise ValueError(f"cannot sample {m} topics from {total}")
    quotas = [m * s // total for s in sizes]
    remainders = [m * s % total for s in sizes]
    short = m - sum(quotas)
    for k in sorted(range(len(sizes)), key=lambda k: (-remainders[k], k))[:short]:
        quotas[k] += 1
    return quotas


def stratified_sample_topics(strata: TopicStrata, m: int, rng: np.random.Generator) -> tuple[str, ...]:
    quotas = stratum_quotas([len(t) for _, t in strata.strata], m)
    chosen: list[str] = []
    for (_, topics), quota in zip(strata.strata, quotas):
        pool = sorted(topics)
        idx = rng.choice(len(pool), size=quota, replace=False)
        chosen.extend(pool[k] for k in idx.tolist())
    return tuple(sorted(chosen))


@dataclass
class _Context:
    config: ExperimentConfig
    runs: list[Run]
    official: Qrels
    strata: TopicStrata
    groups: tuple[str, ...]
    runs_by_group: dict[str, list[Run]]
    group_counts: tuple[int, ...]
    topic_sizes: tuple[int, ...]
    depths: tuple[int, ...]
    reference_cache: dict = field(default_factory=dict)

    def topic_sample(self, m: int, *key: int) -> tuple[str, ...]:
        if m == len(self.strata.topics):
            return tuple(sorted(self.strata.topics))
        return stratified_sample_topics(self.strata, m, _stream(self.config.seed, _TOPIC_STREAM, m, *key))

    def reference(self, topics: tuple[str, ...], metric: MetricId) -> Leaderboard:
        key = (topics, metric)
        if key not in self.reference_cache:
            self.reference_cache.clear()
            q = self.official.restrict_topics(topics, name=self.official.name)
            self.reference_cache[key] = evaluate_runs(self.runs, q, metric)
        return self.reference_cache[key]


def _evaluate_or_zero(runs: list[Run], q: Qrels, metric: MetricId) -> Leaderboard:
    try:
        return evaluate_runs(runs, q, metric)
    except EmptyEffectiveTopicSet:
        # nothing relevant was pooled: every run scores 0 and ties fall back to tag order
        scores = {r.tag: 0.0 for r in runs}
        return Leaderboard(metric, q.name, scores, rank_scores(scores))


def _trial(ctx: _Context, m: int, p: int, metric: MetricId, g: int, i: int, topics: tuple[str, ...]) -> TrialRecord:
    cfg = ctx.config
    if cfg.nested_groups:
        order = _stream(cfg.seed, _NESTED_STREAM, m, i).permutation(len(ctx.groups))
        chosen = tuple(ctx.groups[k] for k in sorted(order[:g].tolist()))
    else:
        rng = _stream(cfg.seed, _GROUP_STREAM, m, p, _METRIC_CODE[metric], g, i)
        chosen = sample_groups(ctx.groups, g, rng)
    if cfg.redraw_topics:
        topics = ctx.topic_sample(m, p, _METRIC_CODE[metric], g, i)

    reference = ctx.reference(topics, metric)
    pooled_runs = [r for grp in chosen for r in ctx.runs_by_group[grp]]
    pool = build_pool(pooled_runs, topics, p)
    q_g = construct_qrels(ctx.official, pool)
    estimate = _evaluate_or_zero(ctx.runs, q_g, metric)
    pair = RankingPair(reference.ranking, estimate.ranking)
    return TrialRecord(
        group_count=g,
        sample_index=i,
        sampled_groups=chosen,
        topic_size=m,
        depth=p,
        metric=metric,
        include_manual=cfg.include_manual,
        tau=kendall_tau(pair),
        tau_ap=tau_ap(pair),
        max_drop=max_drop(pair),
        unique_relevant=pool_stats(q_g, pool).unique_relevant,
    )


def _run_task(ctx: _Context, task: tuple[int, MetricId, int]) -> list[TrialRecord]:
    m, metric, i = task
    topics = ctx.topic_sample(m, i)
    return [
        _trial(ctx, m, p, metric, g, i, topics)
        for p in ctx.depths
        for g in ctx.group_counts
    ]


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_task(task):
    assert _WORKER_CTX is not None
    return _run_task(_WORKER_CTX, task)


def _prepare(
    config: ExperimentConfig,
    runs: Sequence[Run],
    official: Qrels,
    meta: CollectionMeta,
    strata: TopicStrata | None,
) -> _Context:
    runs = sorted(runs, key=lambda r: r.tag)
    if not runs:
        raise ValueError("no runs loaded")
    if not official.grades:
        raise ValueError("official qrels are empty")
    universe = filter_runs(runs, config.include_manual)
    if not universe:
        raise ValueError("no automatic runs to pool once manual runs are excluded")
    runs_by_group: dict[str, list[Run]] = defaultdict(list)
    for r in universe:
        runs_by_group[r.group].append(r)
    groups = tuple(sorted(runs_by_group))

    strata = strata or TopicStrata.from_meta(meta)
    n_topics = len(strata.topics)
    group_counts = config.group_counts or tuple(range(1, len(groups) + 1))
    if group_counts[-1] > len(groups):
        raise ValueError(f"group count {group_counts[-1]} exceeds the {len(groups)} available groups")
    topic_sizes = config.topic_sample_sizes or (n_topics,)
    if topic_sizes[-1] > n_topics:
        raise ValueError(f"topic sample size {topic_sizes[-1]} exceeds the {n_topics} available topics")
    depths = config.pool_depths or (meta.official_pool_depth,)
    return _Context(config, runs, official, strata, groups, dict(runs_by_group), group_counts, topic_sizes, depths)


def check_experiment(
    config: ExperimentConfig,
    runs: Sequence[Run],
    official: Qrels,
    meta: CollectionMeta,
    strata: TopicStrata | None = None,
) -> None:
    """Raise ValueError if the sweep cannot run on this collection."""
    _prepare(config, runs, official, meta, strata)


def run_experiment(
    config: ExperimentConfig,
    runs: Sequence[Run],
    official: Qrels,
    meta: CollectionMeta,
    strata: TopicStrata | None = None,
    jobs: int = 1,
) -> list[TrialRecord]:
    """Run every trial of the sweep and return records in canonical order."""
    ctx = _prepare(config, runs, official, meta, strata)
    tasks = [
        (m, metric, i)
        for m in ctx.topic_sizes
        for metric in config.metrics
        for i in range(1, config.n_samples + 1)
    ]
    log.info(
        "simulating %d groups, %d runs: %d tasks x %d trials",
        len(ctx.groups), len(ctx.runs), len(tasks), len(ctx.depths) * len(ctx.group_counts),
    )
    records: list[TrialRecord] = []
    if jobs <= 1 or len(tasks) == 1:
        for task in tasks:
            records.extend(_run_task(ctx, task))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as ex:
            for chunk in ex.map(_worker_task, tasks):
                records.extend(chunk)
    records.sort(key=lambda r: r.sort_key)
    return records


def aggregate_curves(records: Sequence[TrialRecord]) -> list[LearningCurve]:
    """Average trials per (key, g); AUC and Pearson over g for tau_ap and max drop."""
    if not records:
        return []
    cells: dict[tuple, dict[int, list[TrialRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        cells[r.curve_key][r.group_count].append(r)
    all_g = sorted({r.group_count for r in records})
    n = max(r.sample_index for r in records)
    expected = list(range(1, n + 1))

    curves = []
    for key in sorted(cells, key=lambda k: (k[0], k[1], k[2].value, k[3])):
        by_g = cells[key]
        points = []
        for g in all_g:
            trials = by_g.get(g, [])
            got = sorted(t.sample_index for t in trials)
            if got != expected:
                raise ValueError(
                    f"curve m={key[0]} p={key[1]} {key[2].value} manual={key[3]}: "
                    f"g={g} has samples {got}, expected 1..{n}"
                )
            points.append(
                CurvePoint(
                    g=g,
                    mean_tau_ap=float(np.mean([t.tau_ap for t in trials])),
                    mean_max_drop=float(np.mean([t.max_drop for t in trials])),
                    mean_unique_relevant=float(np.mean([t.unique_relevant for t in trials])),
                    mean_tau=float(np.mean([t.tau for t in trials])),
                )
            )
        curves.append(
            LearningCurve(
                key=key,
                points=tuple(points),
                auc_tau_ap=_auc([(pt.g, pt.mean_tau_ap) for pt in points]),
                auc_max_drop=_auc([(pt.g, pt.mean_max_drop) for pt in points]),
                pearson_tau_ap=_pearson_or_none(points, "mean_tau_ap"),
                pearson_max_drop=_pearson_or_none(points, "mean_max_drop"),
                n_samples=n,
            )
        )
    return curves


def _auc(points: list[tuple[int, float]]) -> float | None:
    return curve_auc(points) if len(points) >= 2 else None


def _pearson_or_none(points: Sequence[CurvePoint], attr: str) -> float | None:
    if len(points) < 2:
        return None
    try:
        return pearson([pt.g for pt in points], [getattr(pt, attr) for pt in points])
    except UndefinedCorrelation:
        return None


RECORD_HEADER = [
    "group_count", "sample", "topic_size", "depth", "metric", "include_manual",
    "tau", "tau_ap", "max_drop", "unique_relevant",
]


def records_to_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([
            r.group_count, r.sample_index, r.topic_size, r.depth, r.metric.value,
            "true" if r.include_manual else "false",
            fmt_float(r.tau), fmt_float(r.tau_ap), r.max_drop, r.unique_relevant,
        ])
    return buf.getvalue()


def curve_to_csv(curve: LearningCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["g", "mean_tau_ap", "mean_max_drop", "mean_unique_relevant", "mean_tau"])
    for pt in curve.points:
        w.writerow([
            pt.g, fmt_float(pt.mean_tau_ap), fmt_float(pt.mean_max_drop),
            fmt_float(pt.mean_unique_relevant), fmt_float(pt.mean_tau),
        ])
    return buf.getvalue()


def curves_summary(curves: Iterable[LearningCurve]) -> dict:
    return {
        "curves": [
            {
                "file": f"curve_{c.slug}.csv",
                "topic_size": c.topic_size,
                "depth": c.depth,
                "metric": c.metric.value,
                "include_manual": c.include_manual,
                "n_samples": c.n_samples,
                "auc_tau_ap": json_float(c.auc_tau_ap),
                "auc_max_drop": json_float(c.auc_max_drop),
                "pearson_tau_ap": json_float(c.pearson_tau_ap),
                "pearson_max_drop": json_float(c.pearson_max_drop),
            }
            for c in curves
        ]
    }


def curves_summary_json(curves: Iterable[LearningCurve]) -> str:
    return json.dumps(curves_summary(curves), indent=2, sort_keys=True) + "\n"
