from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np
import pytest

from poolforge.metrics import MetricId
from poolforge.simulator import (
    RECORD_HEADER,
    ExperimentConfig,
    TopicStrata,
    TrialRecord,
    aggregate_curves,
    curve_to_csv,
    curves_summary,
    filter_runs,
    records_to_csv,
    run_experiment,
    sample_groups,
    stratified_sample_topics,
    stratum_quotas,
)
from poolforge.trec_io import Run, RunKind

from oracles import largest_remainder_oracle


def record(g, i, tau_ap, *, m=10, p=20, metric=MetricId.MAP_1000, manual=True, drop=0, unique=0):
    return TrialRecord(g, i, (), m, p, metric, manual, tau_ap, tau_ap, drop, unique)


class TestSampleGroups:
    def test_full_set(self):
        groups = ("a", "b", "c")
        assert sample_groups(groups, 3, np.random.default_rng(0)) == groups

    def test_deterministic(self):
        groups = tuple("abcdefg")
        picks = {sample_groups(groups, 1, np.random.default_rng(42)) for _ in range(5)}
        assert len(picks) == 1

    @pytest.mark.parametrize("g", [0, 4])
    def test_out_of_range(self, g):
        with pytest.raises(ValueError):
            sample_groups(("a", "b", "c"), g, np.random.default_rng(0))

    def test_uniform_over_pairs(self):
        groups = tuple("ABCDE")
        rng = np.random.default_rng(2024)
        n = 10_000
        counts = Counter(sample_groups(groups, 2, rng) for _ in range(n))
        pairs = list(itertools.combinations(groups, 2))
        assert set(counts) == set(pairs)
        expected = n / len(pairs)
        sigma = math.sqrt(n * (1 / len(pairs)) * (1 - 1 / len(pairs)))
        for pair in pairs:
            assert abs(counts[pair] - expected) <= 3 * sigma
        chi2 = sum((counts[p] - expected) ** 2 / expected for p in pairs)
        # 9 degrees of freedom, 99.9th percentile is 27.88
        assert chi2 < 27.88


class TestStratification:
    def test_robust_quotas(self):
        sizes = [50, 50, 50, 50, 49]
        quotas = stratum_quotas(sizes, 50)
        assert quotas == [10, 10, 10, 10, 10]
        assert quotas == largest_remainder_oracle(sizes, 50)
        assert sum(quotas) == 50

    def test_against_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            sizes = rng.integers(1, 60, size=rng.integers(1, 7)).tolist()
            m = int(rng.integers(1, sum(sizes) + 1))
            assert stratum_quotas(sizes, m) == largest_remainder_oracle(sizes, m)

    def test_errors(self):
        with pytest.raises(ValueError):
            stratum_quotas([5, 5], 0)
        with pytest.raises(ValueError):
            stratum_quotas([5, 5], 11)

    def test_full_sample(self):
        strata = TopicStrata((("a", frozenset({"1", "2"})), ("b", frozenset({"3"}))))
        assert stratified_sample_topics(strata, 3, np.random.default_rng(0)) == ("1", "2", "3")

    def test_respects_quotas(self):
        strata = TopicStrata(tuple((f"s{k}", frozenset(f"{k}-{j:02d}" for j in range(50 if k < 4 else 49))) for k in range(5)))
        got = stratified_sample_topics(strata, 50, np.random.default_rng(3))
        assert len(got) == len(set(got)) == 50
        per = Counter(t.split("-")[0] for t in got)
        assert sorted(per.values()) == [10] * 5

    def test_single_stratum(self):
        strata = TopicStrata.single([str(i) for i in range(20)])
        got = stratified_sample_topics(strata, 7, np.random.default_rng(1))
        assert len(set(got)) == 7 and set(got) <= strata.topics

    def test_overlapping_strata_rejected(self):
        with pytest.raises(ValueError):
            TopicStrata((("a", frozenset({"1"})), ("b", frozenset({"1", "2"}))))


def tb06_runs():
    runs = []
    for k in range(80):
        kind = RunKind.MANUAL if k < 19 else RunKind.AUTOMATIC
        # groups 0..3 are all-manual
        group = f"g{k // 5:02d}"
        runs.append(Run(f"r{k:02d}", group, kind, {}))
    return runs


class TestFilterRuns:
    def test_include_manual_unchanged(self):
        runs = tb06_runs()
        assert filter_runs(runs, True) == runs

    def test_tb06_shape(self):
        kept = filter_runs(tb06_runs(), False)
        assert len(kept) == 61
        assert all(r.kind is RunKind.AUTOMATIC for r in kept)

    def test_all_manual_group_dropped(self):
        kept = filter_runs(tb06_runs(), False)
        assert "g00" not in {r.group for r in kept}

    def test_no_manual_runs_unchanged(self):
        runs = [Run(f"r{k}", f"g{k}", RunKind.AUTOMATIC, {}) for k in range(4)]
        assert filter_runs(runs, False) == runs


class TestAggregate:
    def test_constant_curve(self):
        curves = aggregate_curves([record(g, 1, 1.0) for g in range(1, 6)])
        assert len(curves) == 1
        c = curves[0]
        assert [pt.mean_tau_ap for pt in c.points] == [1.0] * 5
        assert c.auc_tau_ap == 4.0
        assert c.pearson_tau_ap is None

    def test_mean_of_samples(self):
        recs = [record(g, i, v) for g in (1, 2, 3) for i, v in ((1, 0.8), (2, 1.0))]
        c = aggregate_curves(recs)[0]
        assert [pt.mean_tau_ap for pt in c.points] == pytest.approx([0.9] * 3, abs=1e-15)

    def test_upward_trend(self):
        recs = [record(g, i, 0.1 * g + 0.01 * i) for g in range(1, 8) for i in (1, 2)]
        c = aggregate_curves(recs)[0]
        assert c.pearson_tau_ap > 0.99

    def test_missing_cell(self):
        recs = [record(g, i, 0.5) for g in (1, 2, 3) for i in (1, 2)]
        recs = [r for r in recs if not (r.group_count == 2 and r.sample_index == 2)]
        with pytest.raises(ValueError, match="g=2"):
            aggregate_curves(recs)

    def test_separate_keys(self):
        recs = [record(g, 1, 0.5, p=p) for g in (1, 2) for p in (20, 40)]
        curves = aggregate_curves(recs)
        assert [c.depth for c in curves] == [20, 40]
        assert curves[0].slug == "m10_p20_MAP_1000_manual"

    def test_csv_headers(self):
        recs = [record(g, 1, 0.25 * g, drop=g, unique=3) for g in (1, 2)]
        text = records_to_csv(recs)
        assert text.splitlines()[0] == ",".join(RECORD_HEADER)
        assert text.splitlines()[1].endswith(",0.250000,0.250000,1,3")
        curve_csv = curve_to_csv(aggregate_curves(recs)[0])
        assert curve_csv.splitlines()[0] == "g,mean_tau_ap,mean_max_drop,mean_unique_relevant,mean_tau"
        summary = curves_summary(aggregate_curves(recs))
        assert summary["curves"][0]["auc_tau_ap"] == 0.375


class TestRunExperiment:
    def test_degenerate_identity(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(n_samples=2, group_counts=(5,), metrics=("MAP", "NDCG"))
        recs = run_experiment(cfg, c.runs, c.qrels, c.meta)
        assert len(recs) == 4
        for r in recs:
            assert (r.tau, r.tau_ap, r.max_drop) == (1.0, 1.0, 0)

    def test_deterministic(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(n_samples=2, group_counts=(1, 2, 3), topic_sample_sizes=(6,), pool_depths=(5, 10), seed=7)
        a = run_experiment(cfg, c.runs, c.qrels, c.meta)
        b = run_experiment(cfg, list(reversed(c.runs)), c.qrels, c.meta)
        assert records_to_csv(a) == records_to_csv(b)
        assert a == b

    def test_seed_changes_samples(self, small_collection):
        c = small_collection
        base = dict(n_samples=3, group_counts=(2,), topic_sample_sizes=(6,), pool_depths=(10,), metrics=("MAP",))
        a = run_experiment(ExperimentConfig(seed=1, **base), c.runs, c.qrels, c.meta)
        b = run_experiment(ExperimentConfig(seed=2, **base), c.runs, c.qrels, c.meta)
        assert [r.sampled_groups for r in a] != [r.sampled_groups for r in b]

    def test_all_runs_evaluated(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(n_samples=1, group_counts=(1,), pool_depths=(5,), metrics=("MAP",))
        (rec,) = run_experiment(cfg, c.runs, c.qrels, c.meta)
        assert len(rec.sampled_groups) == 1
        # tau over all 10 runs has granularity 1/45
        assert round(rec.tau * 45) == pytest.approx(rec.tau * 45, abs=1e-9)

    def test_nested_unique_relevant_monotone(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(
            n_samples=3, topic_sample_sizes=(8,), pool_depths=(5, 10, 20), metrics=("MAP",), nested_groups=True, seed=4
        )
        recs = run_experiment(cfg, c.runs, c.qrels, c.meta)
        by = {(r.depth, r.sample_index, r.group_count): r for r in recs}
        shallower = {10: 5, 20: 10}
        for (p, i, g), r in by.items():
            if g > 1:
                smaller = by[(p, i, g - 1)]
                assert set(smaller.sampled_groups) <= set(r.sampled_groups)
                assert smaller.unique_relevant <= r.unique_relevant
            if p in shallower:
                assert by[(shallower[p], i, g)].unique_relevant <= r.unique_relevant

    def test_redraw_topics_mode(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(n_samples=2, group_counts=(1, 5), topic_sample_sizes=(6,), metrics=("MAP",), redraw_topics=True)
        recs = run_experiment(cfg, c.runs, c.qrels, c.meta)
        assert len(recs) == 4
        # g = |G| at official depth still reproduces the reference whatever the topic draw
        assert all(r.tau_ap == 1.0 for r in recs if r.group_count == 5)

    def test_manual_exclusion(self, mixed_collection):
        c = mixed_collection
        cfg = ExperimentConfig(n_samples=1, group_counts=(1,), metrics=("MAP",), include_manual=False)
        recs = run_experiment(cfg, c.runs, c.qrels, c.meta)
        assert all(not r.include_manual for r in recs)

    def test_no_automatic_runs(self, small_collection):
        c = small_collection
        manual = [Run(r.tag, r.group, RunKind.MANUAL, r.rankings) for r in c.runs]
        with pytest.raises(ValueError, match="automatic"):
            run_experiment(ExperimentConfig(include_manual=False), manual, c.qrels, c.meta)

    def test_group_count_too_large(self, small_collection):
        c = small_collection
        with pytest.raises(ValueError, match="exceeds"):
            run_experiment(ExperimentConfig(group_counts=(6,)), c.runs, c.qrels, c.meta)

    def test_parallel_matches_serial(self, small_collection):
        c = small_collection
        cfg = ExperimentConfig(n_samples=2, group_counts=(1, 3), topic_sample_sizes=(6,), pool_depths=(10,))
        serial = run_experiment(cfg, c.runs, c.qrels, c.meta, jobs=1)
        parallel = run_experiment(cfg, c.runs, c.qrels, c.meta, jobs=2)
        assert serial == parallel


class TestExperimentConfig:
    def test_normalises_sets(self):
        cfg = ExperimentConfig(group_counts=[3, 1, 3], metrics=["ndcg"])
        assert cfg.group_counts == (1, 3)
        assert cfg.metrics == (MetricId.NDCG_10,)

    @pytest.mark.parametrize("kwargs", [{"n_samples": 0}, {"pool_depths": [0]}, {"group_counts": []}, {"metrics": []}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)
