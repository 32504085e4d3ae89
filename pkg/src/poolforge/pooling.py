"""Depth-k pooling and simulated qrels construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .trec_io import Qrels, Run


@dataclass(frozen=True)
class Pool:
    members: frozenset[tuple[str, str]]
    depth: int
    topics: frozenset[str]
    contributing_groups: frozenset[str]

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.members


@dataclass(frozen=True)
class PoolStats:
    judged_count: int
    relevant_count: int
    unique_relevant: int
    percent_relevant: float

    def to_dict(self) -> dict:
        return {
            "judged_count": self.judged_count,
            "relevant_count": self.relevant_count,
            "unique_relevant": self.unique_relevant,
            "percent_relevant": self.percent_relevant,
        }


def build_pool(runs: Iterable[Run], topics: Iterable[str], depth: int) -> Pool:
    """Union of the top-``depth`` documents of every run on every requested topic."""
    runs = list(runs)
    topics = frozenset(topics)
    if depth < 1:
        raise ValueError(f"pool depth must be >= 1, got {depth}")
    if not runs:
        raise ValueError("cannot pool an empty set of runs")
    if not topics:
        raise ValueError("cannot pool over an empty topic set")
    members: set[tuple[str, str]] = set()
    for run in runs:
        for topic in topics:
            members.update((topic, d) for d in run.docs(topic)[:depth])
    return Pool(frozenset(members), depth, topics, frozenset(r.group for r in runs))


def construct_qrels(official: Qrels, pool: Pool, name: str | None = None) -> Qrels:
    """Official judgments restricted to pooled pairs.

    Pooled pairs that were never officially judged are left out, so they score as non-relevant.
    """
    grades = official.grades
    if len(pool.members) < len(grades):
        kept = {pair: grades[pair] for pair in pool.members if pair in grades}
    else:
        kept = {pair: g for pair, g in grades.items() if pair in pool.members}
    return Qrels(kept, name or f"{official.name}@pool{pool.depth}")


def pool_stats(q: Qrels, pool: Pool | None = None) -> PoolStats:
    # pool is accepted for symmetry with construct_qrels; q already carries only pooled pairs
    judged = len(q.grades)
    relevant = sum(1 for g in q.grades.values() if g > 0)
    return PoolStats(judged, relevant, relevant, relevant / judged if judged else 0.0)
