"""MAP@1000 / NDCG@10 scoring and deterministic leaderboards."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._fmt import fmt_float, json_float
from .trec_io import Qrels, Run

log = logging.getLogger(__name__)

AP_CUTOFF = 1000
NDCG_K = 10


class MetricId(str, enum.Enum):
    MAP_1000 = "MAP_1000"
    NDCG_10 = "NDCG_10"

    @classmethod
    def parse(cls, value: "str | MetricId") -> "MetricId":
        if isinstance(value, MetricId):
            return value
        norm = value.strip().upper().replace("@", "_")
        aliases = {"MAP": cls.MAP_1000, "NDCG": cls.NDCG_10}
        if norm in aliases:
            return aliases[norm]
        return cls(norm)


class NoRelevantDocuments(ValueError):
    """The topic has no relevant document in the qrels; callers exclude it from means."""


class EmptyEffectiveTopicSet(ValueError):
    pass


def _ap_from_gains(gains: np.ndarray, num_relevant: int, cutoff: int) -> float:
    rel = np.asarray(gains[:cutoff]) > 0
    if not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.sum(hits[rel] / ranks) / num_relevant)


_DISCOUNTS = 1.0 / np.log2(np.arange(2, AP_CUTOFF + 2, dtype=np.float64))


def _dcg(gains: np.ndarray, k: int) -> float:
    g = np.maximum(np.asarray(gains[:k], dtype=np.float64), 0.0)
    return float(np.dot(g, _discounts(len(g))))


def _discounts(n: int) -> np.ndarray:
    if n <= len(_DISCOUNTS):
        return _DISCOUNTS[:n]
    return 1.0 / np.log2(np.arange(2, n + 2, dtype=np.float64))


def _ideal_dcg(judged_grades: Iterable[int], k: int) -> float:
    top = sorted((g for g in judged_grades if g > 0), reverse=True)[:k]
    return _dcg(np.array(top, dtype=np.float64), k)


def average_precision(ranking: Sequence[str], q: Qrels, topic: str, cutoff: int = AP_CUTOFF) -> float:
    """Uninterpolated AP over the first ``cutoff`` documents.

    The denominator is every relevant document of the topic in ``q``, retrieved or not.
    """
    judged = q.topic_grades(topic)
    num_rel = sum(1 for g in judged.values() if g > 0)
    if num_rel == 0:
        raise NoRelevantDocuments(topic)
    gains = np.fromiter((judged.get(d, 0) for d in ranking[:cutoff]), dtype=np.int64)
    return _ap_from_gains(gains, num_rel, cutoff)


def ndcg_at_k(ranking: Sequence[str], q: Qrels, topic: str, k: int = NDCG_K) -> float:
    """Linear-gain NDCG@k; the ideal ordering is built from the topic's judged documents."""
    judged = q.topic_grades(topic)
    idcg = _ideal_dcg(judged.values(), k)
    if idcg == 0.0:
        raise NoRelevantDocuments(topic)
    gains = np.fromiter((judged.get(d, 0) for d in ranking[:k]), dtype=np.int64)
    return _dcg(gains, k) / idcg


@dataclass(frozen=True)
class Leaderboard:
    metric: MetricId
    qrels_name: str
    scores: Mapping[str, float]
    ranking: tuple[str, ...]
    topics_evaluated: int = 0
    topics_excluded: int = 0

    def rank_of(self, tag: str) -> int:
        return self.ranking.index(tag) + 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "run_tag", "score"])
        for i, tag in enumerate(self.ranking, start=1):
            w.writerow([i, tag, fmt_float(self.scores[tag])])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {tag: {"rank": i, "score": json_float(self.scores[tag])} for i, tag in enumerate(self.ranking, start=1)}
        return json.dumps(doc, indent=2) + "\n"

    @staticmethod
    def ranking_from_csv(text: str) -> tuple[str, ...]:
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or not {"rank", "run_tag"} <= set(rows[0]):
            raise ValueError("leaderboard CSV needs 'rank,run_tag,score' columns")
        rows.sort(key=lambda r: int(r["rank"]))
        return tuple(r["run_tag"] for r in rows)


def _lookup_gains(docs: np.ndarray, judged_docs: np.ndarray, judged_grades: np.ndarray) -> np.ndarray:
    if docs.size == 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.searchsorted(judged_docs, docs)
    idx[idx >= judged_docs.size] = 0
    hit = judged_docs[idx] == docs
    return np.where(hit, judged_grades[idx], 0)


def rank_scores(scores: Mapping[str, float]) -> tuple[str, ...]:
    """Order run tags by score descending, ties broken by ascending tag."""
    return tuple(sorted(scores, key=lambda tag: (-scores[tag], tag)))


def evaluate_runs(runs: Iterable[Run], q: Qrels, metric: MetricId | str) -> Leaderboard:
    """Mean per-topic score of every run, over topics with at least one relevant document."""
    metric = MetricId.parse(metric)
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to evaluate")
    if len({r.tag for r in runs}) != len(runs):
        raise ValueError("run tags must be unique")

    eligible = []
    for topic in sorted(q.by_topic):
        judged = q.by_topic[topic]
        num_rel = sum(1 for g in judged.values() if g > 0)
        if num_rel == 0:
            continue
        if metric is MetricId.MAP_1000:
            norm = float(num_rel)
        else:
            norm = _ideal_dcg(judged.values(), NDCG_K)
        eligible.append((topic, norm))
    if not eligible:
        raise EmptyEffectiveTopicSet(f"qrels {q.name!r} has no topic with a relevant document")

    all_topics = set(q.by_topic).union(*(r.rankings.keys() for r in runs))
    excluded = len(all_topics) - len(eligible)
    if excluded:
        log.debug("qrels %s: %d topic(s) without relevant documents excluded", q.name, excluded)

    empty = np.zeros(0, dtype=str)
    scores: dict[str, float] = {}
    for run in runs:
        per_topic = []
        arrays = run.doc_arrays
        for topic, norm in eligible:
            judged_docs, judged_grades = q.lookup_arrays[topic]
            gains = _lookup_gains(arrays.get(topic, empty), judged_docs, judged_grades)
            if metric is MetricId.MAP_1000:
                per_topic.append(_ap_from_gains(gains, int(norm), AP_CUTOFF))
            else:
                per_topic.append(_dcg(gains, NDCG_K) / norm)
        # fsum is correctly rounded, so the mean does not depend on topic order
        scores[run.tag] = math.fsum(per_topic) / len(per_topic)

    return Leaderboard(metric, q.name, scores, rank_scores(scores), len(eligible), excluded)
