"""Synthetic collections: runs, qrels, manifest and metadata with known structure.

Each topic owns a corpus of ``corpus_size`` documents, each relevant with probability
``prevalence``. Runs pick which documents to retrieve by a shared, relevance-blind
popularity draw (so runs overlap the way real submissions do) and order them by
``signal * grade + noise / quality`` where quality is a per-group lognormal draw. Because the
retrieval choice ignores relevance, the judged pool keeps the corpus prevalence.

Manual runs additionally swap part of their list for relevant documents that no
automatic run retrieved.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .trec_io import (
    CollectionMeta,
    GroupManifest,
    ManifestEntry,
    Qrels,
    Run,
    RunKind,
    serialize_manifest,
    serialize_qrels,
    serialize_run,
)

_MASK64 = (1 << 64) - 1
_TOPIC_DOMAIN = 0x70C
_GROUP_DOMAIN = 0x6A0
_MANUAL_DOMAIN = 0x3A1


@dataclass(frozen=True)
class SynthSpec:
    n_groups: int = 10
    runs_per_group: int = 3
    manual_fraction: float = 0.0
    n_topics: int = 50
    corpus_size: int = 10_000
    prevalence: float = 0.056
    quality_spread: float = 1.0
    seed: int = 0
    # documents retrieved per run and topic; also the official pool depth
    depth: int = 100
    popularity_spread: float = 4.0
    # weight of the relevance grade in run scores, relative to unit noise
    signal: float = 0.5
    high_grade_fraction: float = 0.3
    # share of a manual run's list replaced by relevant documents no automatic run found
    manual_bonus: float = 0.05
    n_strata: int = 1
    name: str = "synthetic"

    def validate(self) -> None:
        for name in ("n_groups", "runs_per_group", "n_topics", "corpus_size", "depth", "n_strata"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("manual_fraction", "prevalence", "high_grade_fraction", "manual_bonus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.quality_spread < 0 or self.popularity_spread < 0 or self.signal < 0:
            raise ValueError("quality_spread, popularity_spread and signal must be >= 0")
        if self.prevalence * self.corpus_size < 1:
            raise ValueError(
                f"prevalence {self.prevalence} x corpus_size {self.corpus_size} gives < 1 relevant document per topic"
            )
        if self.depth > self.corpus_size:
            raise ValueError("depth cannot exceed corpus_size")
        if self.n_strata > self.n_topics:
            raise ValueError("n_strata cannot exceed n_topics")

    def to_dict(self) -> dict:
        return asdict(self)


class SyntheticCollection(NamedTuple):
    runs: list[Run]
    qrels: Qrels
    manifest: GroupManifest
    meta: CollectionMeta


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([k & _MASK64 for k in key]))


def _width(n: int, minimum: int) -> int:
    return max(minimum, len(str(n)))


def doc_id(i: int, corpus_size: int) -> str:
    return f"d{i + 1:0{_width(corpus_size, 6)}d}"


def topic_id(i: int, n_topics: int) -> str:
    return f"t{i + 1:0{_width(n_topics, 3)}d}"


def draw_relevance(spec: SynthSpec, topic_index: int) -> np.ndarray:
    """Grades of every corpus document on one topic (0, 1 or 2)."""
    rng = _rng(spec.seed, _TOPIC_DOMAIN, topic_index)
    relevant = rng.random(spec.corpus_size) < spec.prevalence
    high = rng.random(spec.corpus_size) < spec.high_grade_fraction
    return np.where(relevant, np.where(high, 2, 1), 0).astype(np.int64)


def _layout(spec: SynthSpec):
    """Run tags, their groups and kinds, and per-group quality."""
    groups = [f"grp{g + 1:0{_width(spec.n_groups, 2)}d}" for g in range(spec.n_groups)]
    q_rng = _rng(spec.seed, _GROUP_DOMAIN)
    quality = np.exp(spec.quality_spread * q_rng.standard_normal(spec.n_groups))
    tags, owners = [], []
    for gi, g in enumerate(groups):
        for j in range(spec.runs_per_group):
            tags.append(f"{g}-run{j + 1}")
            owners.append(gi)
    n_manual = int(round(spec.manual_fraction * len(tags)))
    manual_idx = set(_rng(spec.seed, _MANUAL_DOMAIN).permutation(len(tags))[:n_manual].tolist())
    kinds = [RunKind.MANUAL if i in manual_idx else RunKind.AUTOMATIC for i in range(len(tags))]
    return groups, quality, tags, owners, kinds


def generate(spec: SynthSpec) -> SyntheticCollection:
    spec.validate()
    groups, quality, tags, owners, kinds = _layout(spec)
    n_runs = len(tags)
    topics = [topic_id(t, spec.n_topics) for t in range(spec.n_topics)]
    docs = np.array([doc_id(i, spec.corpus_size) for i in range(spec.corpus_size)])
    noise_scale = 1.0 / quality[np.array(owners)]
    is_manual = np.array([k is RunKind.MANUAL for k in kinds])
    n_bonus = int(round(spec.manual_bonus * spec.depth))

    scores: list[dict[str, list[tuple[str, float]]]] = [{} for _ in range(n_runs)]
    for ti, topic in enumerate(topics):
        grades = draw_relevance(spec, ti)
        rng = _rng(spec.seed, _TOPIC_DOMAIN, ti, 1)
        log_pop = spec.popularity_spread * rng.standard_normal(spec.corpus_size)
        # Gumbel top-k: weighted sampling without replacement, weights exp(log_pop)
        keys = log_pop + rng.gumbel(size=(n_runs, spec.corpus_size))
        picked = np.argpartition(-keys, spec.depth - 1, axis=1)[:, : spec.depth]

        if n_bonus and is_manual.any():
            auto_seen = np.zeros(spec.corpus_size, dtype=bool)
            auto_seen[picked[~is_manual].ravel()] = True
            unfound = np.flatnonzero((grades > 0) & ~auto_seen)
            for r in np.flatnonzero(is_manual):
                row = picked[r]
                extra = np.setdiff1d(unfound, row)
                if extra.size == 0:
                    continue
                extra = rng.choice(extra, size=min(n_bonus, extra.size), replace=False)
                slots = np.flatnonzero(grades[row] == 0)[: extra.size]
                row[slots] = extra[: slots.size]

        noise = rng.standard_normal((n_runs, spec.depth)) * noise_scale[:, None]
        run_scores = np.round(spec.signal * grades[picked] + noise, 6)
        for r in range(n_runs):
            scores[r][topic] = list(zip(docs[picked[r]].tolist(), run_scores[r].tolist()))

    runs = [Run.from_scores(tags[r], groups[owners[r]], kinds[r], scores[r]) for r in range(n_runs)]
    manifest = GroupManifest({tags[r]: ManifestEntry(groups[owners[r]], kinds[r]) for r in range(n_runs)})

    judged = {}
    for ti, topic in enumerate(topics):
        grades = draw_relevance(spec, ti)
        for r in runs:
            for d in r.docs(topic):
                judged[(topic, d)] = int(grades[int(d[1:]) - 1])
    official = Qrels(judged, spec.name)

    bounds = np.linspace(0, spec.n_topics, spec.n_strata + 1).round().astype(int)
    strata = tuple(
        (f"s{k + 1}", tuple(topics[bounds[k] : bounds[k + 1]])) for k in range(spec.n_strata)
    ) if spec.n_strata > 1 else ()
    meta = CollectionMeta(
        name=spec.name,
        collection_size=spec.corpus_size,
        official_pool_depth=spec.depth,
        topics=frozenset(topics),
        strata=strata,
    )
    return SyntheticCollection(runs, official, manifest, meta)


def known_ranking_fixture(n_runs: int, n_topics: int = 3) -> tuple[list[Run], Qrels]:
    """Runs whose MAP order is forced: run k holds the single relevant document at rank k.

    Every run retrieves ``n_runs`` documents per topic, so AP(run k) = 1/k on every topic.
    Filler documents are judged non-relevant, as if every run had been pooled in full.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be >= 2")
    width = len(str(n_runs))
    runs, grades = [], {}
    for k in range(1, n_runs + 1):
        tag = f"r{k:0{width}d}"
        per_topic = {}
        for t in range(1, n_topics + 1):
            topic = f"t{t}"
            ranked = []
            for pos in range(1, n_runs + 1):
                doc = "rel" if pos == k else f"f{k:0{width}d}_{pos:0{width}d}"
                ranked.append((doc, float(n_runs + 1 - pos)))
                grades[(topic, doc)] = 1 if doc == "rel" else 0
            per_topic[topic] = ranked
        runs.append(Run.from_scores(tag, f"grp{k:0{width}d}", RunKind.AUTOMATIC, per_topic))
    return runs, Qrels(grades, "known-ranking")


def write_collection(coll: SyntheticCollection, out_dir: str | Path) -> None:
    """Write runs/, qrels.txt, manifest.csv and meta.json under ``out_dir``."""
    out = Path(out_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    for run in coll.runs:
        (runs_dir / f"{run.tag}.run").write_text(serialize_run(run), encoding="utf-8")
    (out / "qrels.txt").write_text(serialize_qrels(coll.qrels), encoding="utf-8")
    (out / "manifest.csv").write_text(serialize_manifest(coll.manifest), encoding="utf-8")
    (out / "meta.json").write_text(coll.meta.to_json(), encoding="utf-8")
