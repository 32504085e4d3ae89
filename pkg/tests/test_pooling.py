from __future__ import annotations

import random

import pytest

from poolforge.pooling import build_pool, construct_qrels, pool_stats
from poolforge.trec_io import Qrels, Run, RunKind

from oracles import prefix_union_oracle


def make_run(tag, per_topic, group=None):
    n = max((len(v) for v in per_topic.values()), default=0)
    return Run.from_scores(
        tag,
        group or tag,
        RunKind.AUTOMATIC,
        {t: [(d, float(n - i)) for i, d in enumerate(docs)] for t, docs in per_topic.items()},
    )


class TestBuildPool:
    def test_prefix_of_single_run(self):
        pool = build_pool([make_run("a", {"t": ["d1", "d2", "d3"]})], ["t"], 2)
        assert pool.members == {("t", "d1"), ("t", "d2")}

    def test_union_deduplicated(self):
        runs = [make_run("a", {"t": ["d1", "d2"]}), make_run("b", {"t": ["d2", "d3"]})]
        pool = build_pool(runs, ["t"], 2)
        assert pool.members == {("t", "d1"), ("t", "d2"), ("t", "d3")}
        assert pool.contributing_groups == {"a", "b"}

    def test_matches_nested_loop_oracle(self):
        rng = random.Random(17)
        topics = ["t1", "t2", "t3"]
        raw = []
        for _ in range(5):
            raw.append({t: rng.sample([f"d{i}" for i in range(40)], 25) for t in topics})
        runs = [make_run(f"r{k}", per) for k, per in enumerate(raw)]
        pool = build_pool(runs, topics, 10)
        expected = prefix_union_oracle(raw, topics, 10)
        assert pool.members == expected
        assert len(pool) == len(expected)

    def test_topic_restriction_and_missing_topic(self):
        run = make_run("a", {"t1": ["x"], "t2": ["y"]})
        assert build_pool([run], ["t2", "t9"], 5).members == {("t2", "y")}

    def test_monotone_in_depth(self, small_collection):
        topics = sorted(small_collection.meta.topics)
        sizes = [len(build_pool(small_collection.runs, topics, p)) for p in (1, 5, 10, 20, 30)]
        assert sizes == sorted(sizes)

    def test_monotone_in_runs(self, small_collection):
        topics = sorted(small_collection.meta.topics)
        small = build_pool(small_collection.runs[:3], topics, 10).members
        large = build_pool(small_collection.runs, topics, 10).members
        assert small <= large

    @pytest.mark.parametrize("depth,topics,runs", [(0, ["t"], True), (1, [], True), (1, ["t"], False)])
    def test_errors(self, depth, topics, runs):
        rs = [make_run("a", {"t": ["d"]})] if runs else []
        with pytest.raises(ValueError):
            build_pool(rs, topics, depth)


class TestConstructQrels:
    def test_identity_when_pool_covers_official(self):
        official = Qrels({("t", "d1"): 1, ("t", "d2"): 0, ("u", "d1"): 2})
        run = make_run("a", {"t": ["d1", "d2"], "u": ["d1"]})
        q = construct_qrels(official, build_pool([run], ["t", "u"], 10))
        assert q == official

    def test_restricted_to_pool_topics(self):
        official = Qrels({("t", "d1"): 1, ("u", "d1"): 2})
        run = make_run("a", {"t": ["d1"], "u": ["d1"]})
        q = construct_qrels(official, build_pool([run], ["t"], 10))
        assert q.grades == {("t", "d1"): 1}

    def test_unjudged_pair_omitted(self):
        official = Qrels({("t", "d1"): 1})
        run = make_run("a", {"t": ["dX", "d1"]})
        q = construct_qrels(official, build_pool([run], ["t"], 10))
        assert ("t", "dX") not in q.grades
        assert q.grades == {("t", "d1"): 1}

    def test_intersection_37_of_100(self):
        rng = random.Random(37)
        grades = {("t", f"d{i:03d}"): rng.randrange(0, 3) for i in range(100)}
        chosen = rng.sample(sorted(d for _, d in grades), 37)
        run = make_run("a", {"t": chosen + ["unjudged1", "unjudged2"]})
        q = construct_qrels(Qrels(grades), build_pool([run], ["t"], 1000))
        assert len(q.grades) == 37
        assert q.grades == {k: v for k, v in grades.items() if k[1] in set(chosen)}

    def test_default_name(self):
        official = Qrels({("t", "d1"): 1}, "rb04")
        run = make_run("a", {"t": ["d1"]})
        assert construct_qrels(official, build_pool([run], ["t"], 7)).name == "rb04@pool7"


class TestPoolStats:
    def test_empty(self):
        s = pool_stats(Qrels({}))
        assert (s.judged_count, s.relevant_count, s.unique_relevant, s.percent_relevant) == (0, 0, 0, 0.0)

    def test_hand_count(self):
        q = Qrels({("t", "a"): 1, ("t", "b"): 1, ("t", "c"): 0, ("t", "d"): 2})
        s = pool_stats(q)
        assert s.judged_count == 4
        assert s.unique_relevant == 3
        assert s.percent_relevant == 0.75

    def test_negative_grades_not_relevant(self):
        s = pool_stats(Qrels({("t", "a"): -1, ("t", "b"): 1}))
        assert s.unique_relevant == 1

    def test_unique_relevant_monotone_in_depth(self, small_collection):
        topics = sorted(small_collection.meta.topics)
        counts = [
            pool_stats(construct_qrels(small_collection.qrels, build_pool(small_collection.runs, topics, p))).unique_relevant
            for p in (5, 10, 20, 30)
        ]
        assert counts == sorted(counts)
