"""TREC run/qrels parsing and serialization, plus the group manifest and collection metadata."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

MAX_RUN_DEPTH = 1000

Text = Union[str, bytes]


class TrecFormatError(ValueError):
    """Malformed or inconsistent TREC-format input."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += source
        if line is not None:
            where += f"{':' if where else ''}line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class RunKind(str, enum.Enum):
    MANUAL = "manual"
    AUTOMATIC = "automatic"


def _decode(text: Text) -> str:
    if isinstance(text, bytes):
        return text.decode("utf-8")
    return text


def _lines(text: Text):
    for line_no, raw in enumerate(_decode(text).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line


def canonical_order(pairs: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Sort (doc, score) pairs by score descending, then doc id descending."""
    return sorted(pairs, key=lambda p: (p[1], p[0]), reverse=True)


@dataclass(frozen=True)
class Run:
    """One system's ranked lists, in canonical order and capped at MAX_RUN_DEPTH per topic."""

    tag: str
    group: str
    kind: RunKind
    rankings: Mapping[str, tuple[tuple[str, float], ...]]

    @classmethod
    def from_scores(
        cls,
        tag: str,
        group: str,
        kind: RunKind | str,
        scores: Mapping[str, Mapping[str, float] | Iterable[tuple[str, float]]],
    ) -> "Run":
        rankings = {}
        for topic, docs in scores.items():
            items = docs.items() if isinstance(docs, Mapping) else docs
            rankings[topic] = tuple(canonical_order(items)[:MAX_RUN_DEPTH])
        return cls(tag, group, RunKind(kind), rankings)

    @property
    def topics(self) -> frozenset[str]:
        return frozenset(self.rankings)

    def docs(self, topic: str) -> tuple[str, ...]:
        return self.doc_lists.get(topic, ())

    @cached_property
    def doc_lists(self) -> dict[str, tuple[str, ...]]:
        return {t: tuple(d for d, _ in ranked) for t, ranked in self.rankings.items()}

    @cached_property
    def doc_arrays(self) -> dict[str, np.ndarray]:
        # unicode arrays, used for vectorised grade lookups in metrics
        return {t: np.array(docs, dtype=str) for t, docs in self.doc_lists.items()}


@dataclass(frozen=True)
class Qrels:
    """Graded judgments keyed by (topic, doc). A grade > 0 means relevant."""

    grades: Mapping[tuple[str, str], int]
    name: str = "qrels"

    def __len__(self) -> int:
        return len(self.grades)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Qrels):
            return NotImplemented
        return dict(self.grades) == dict(other.grades)

    __hash__ = None  # type: ignore[assignment]

    @cached_property
    def by_topic(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for (topic, doc), grade in self.grades.items():
            out.setdefault(topic, {})[doc] = grade
        return out

    @property
    def topics(self) -> frozenset[str]:
        return frozenset(self.by_topic)

    def grade(self, topic: str, doc: str) -> int:
        return self.grades.get((topic, doc), 0)

    def topic_grades(self, topic: str) -> dict[str, int]:
        return self.by_topic.get(topic, {})

    def num_relevant(self, topic: str) -> int:
        return sum(1 for g in self.topic_grades(topic).values() if g > 0)

    @cached_property
    def lookup_arrays(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per topic: (sorted judged doc ids, matching grades)."""
        out = {}
        for topic, judged in self.by_topic.items():
            docs = sorted(judged)
            out[topic] = (
                np.array(docs, dtype=str),
                np.array([judged[d] for d in docs], dtype=np.int64),
            )
        return out

    def restrict_topics(self, topics: Iterable[str], name: str | None = None) -> "Qrels":
        keep = set(topics)
        return Qrels(
            {k: g for k, g in self.grades.items() if k[0] in keep},
            self.name if name is None else name,
        )


@dataclass(frozen=True)
class ManifestEntry:
    group: str
    kind: RunKind


@dataclass(frozen=True)
class GroupManifest:
    entries: Mapping[str, ManifestEntry]

    def __post_init__(self):
        if not self.entries:
            raise TrecFormatError("manifest has no entries")

    @property
    def groups(self) -> frozenset[str]:
        return frozenset(e.group for e in self.entries.values())

    def __contains__(self, tag: str) -> bool:
        return tag in self.entries

    def __getitem__(self, tag: str) -> ManifestEntry:
        return self.entries[tag]


@dataclass(frozen=True)
class CollectionMeta:
    name: str
    collection_size: int
    official_pool_depth: int
    topics: frozenset[str]
    # corpus identity; collections sharing it share a document collection
    corpus: str | None = None
    strata: tuple[tuple[str, tuple[str, ...]], ...] = field(default=())

    def __post_init__(self):
        if self.collection_size < 1:
            raise ValueError("collection_size must be >= 1")
        if self.official_pool_depth < 1:
            raise ValueError("official_pool_depth must be >= 1")
        if not self.topics:
            raise ValueError("collection meta must list at least one topic")

    @property
    def corpus_id(self) -> str:
        return self.corpus if self.corpus is not None else f"size:{self.collection_size}"

    def to_json(self) -> str:
        doc = {
            "name": self.name,
            "collection_size": self.collection_size,
            "official_pool_depth": self.official_pool_depth,
            "topics": sorted(self.topics),
        }
        if self.corpus is not None:
            doc["corpus"] = self.corpus
        if self.strata:
            doc["strata"] = [{"label": lbl, "topics": list(ts)} for lbl, ts in self.strata]
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: Text) -> "CollectionMeta":
        doc = json.loads(_decode(text))
        try:
            strata = tuple(
                (str(s["label"]), tuple(str(t) for t in s["topics"])) for s in doc.get("strata", [])
            )
            return cls(
                name=str(doc["name"]),
                collection_size=int(doc["collection_size"]),
                official_pool_depth=int(doc["official_pool_depth"]),
                topics=frozenset(str(t) for t in doc["topics"]),
                corpus=doc.get("corpus"),
                strata=strata,
            )
        except KeyError as exc:
            raise ValueError(f"collection meta is missing field {exc.args[0]!r}") from None


def parse_run_file(text: Text, manifest: GroupManifest, source: str | None = None) -> Run:
    """Parse a six-column TREC run.

    Declared ranks are ignored: each topic is re-sorted by (score desc, doc id desc)
    and truncated to the top 1000.
    """
    per_topic: dict[str, dict[str, float]] = {}
    tag: str | None = None
    for line_no, line in _lines(text):
        parts = line.split()
        if len(parts) != 6:
            raise TrecFormatError(f"expected 6 columns, got {len(parts)}", line_no, source)
        topic, _q0, doc, rank, score_s, run_tag = parts
        try:
            if int(rank) < 0:
                raise ValueError
        except ValueError:
            raise TrecFormatError(f"invalid rank {rank!r}", line_no, source) from None
        try:
            score = float(score_s)
        except ValueError:
            raise TrecFormatError(f"unparsable score {score_s!r}", line_no, source) from None
        if not math.isfinite(score):
            raise TrecFormatError(f"non-finite score {score_s!r}", line_no, source)
        if tag is None:
            tag = run_tag
        elif run_tag != tag:
            raise TrecFormatError(f"run tag {run_tag!r} differs from {tag!r}", line_no, source)
        docs = per_topic.setdefault(topic, {})
        if doc in docs:
            raise TrecFormatError(f"duplicate document {doc!r} for topic {topic!r}", line_no, source)
        docs[doc] = score

    if tag is None:
        raise TrecFormatError("run file has no entries", source=source)
    if tag not in manifest:
        raise TrecFormatError(f"run tag {tag!r} is not in the group manifest", source=source)
    entry = manifest[tag]
    return Run.from_scores(tag, entry.group, entry.kind, per_topic)


def serialize_run(run: Run) -> str:
    buf = io.StringIO()
    for topic in sorted(run.rankings):
        for rank, (doc, score) in enumerate(run.rankings[topic], start=1):
            buf.write(f"{topic} Q0 {doc} {rank} {score!r} {run.tag}\n")
    return buf.getvalue()


def parse_qrels(text: Text, name: str = "qrels", source: str | None = None) -> Qrels:
    grades: dict[tuple[str, str], int] = {}
    for line_no, line in _lines(text):
        parts = line.split()
        if len(parts) != 4:
            raise TrecFormatError(f"expected 4 columns, got {len(parts)}", line_no, source)
        topic, _iteration, doc, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise TrecFormatError(f"unparsable grade {grade_s!r}", line_no, source) from None
        key = (topic, doc)
        if key in grades:
            raise TrecFormatError(f"duplicate judgment for {topic} {doc}", line_no, source)
        grades[key] = grade
    return Qrels(grades, name)


def serialize_qrels(q: Qrels) -> str:
    return "".join(f"{t} 0 {d} {q.grades[(t, d)]}\n" for t, d in sorted(q.grades))


def load_manifest(text: Text) -> GroupManifest:
    reader = csv.reader(io.StringIO(_decode(text)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["run_tag", "group", "kind"]:
        raise TrecFormatError("manifest header must be 'run_tag,group,kind'", 1)
    entries: dict[str, ManifestEntry] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise TrecFormatError(f"expected 3 fields, got {len(row)}", line_no)
        tag, group, kind = (c.strip() for c in row)
        if not tag or not group:
            raise TrecFormatError("empty run tag or group", line_no)
        try:
            kind_v = RunKind(kind)
        except ValueError:
            raise TrecFormatError(f"unknown kind {kind!r}", line_no) from None
        if tag in entries:
            raise TrecFormatError(f"duplicate run tag {tag!r}", line_no)
        entries[tag] = ManifestEntry(group, kind_v)
    return GroupManifest(entries)


def serialize_manifest(manifest: GroupManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_tag", "group", "kind"])
    for tag in sorted(manifest.entries):
        e = manifest.entries[tag]
        writer.writerow([tag, e.group, e.kind.value])
    return buf.getvalue()


def load_runs_dir(path: str | Path, manifest: GroupManifest) -> list[Run]:
    """Load every regular file in ``path`` as a run. Each manifest tag must be loaded exactly once."""
    path = Path(path)
    runs: dict[str, Run] = {}
    for f in sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith(".")):
        run = parse_run_file(f.read_bytes(), manifest, source=str(f))
        if run.tag in runs:
            raise TrecFormatError(f"run tag {run.tag!r} loaded twice", source=str(f))
        runs[run.tag] = run
    missing = sorted(set(manifest.entries) - set(runs))
    if missing:
        raise TrecFormatError(f"manifest lists runs with no file: {', '.join(missing)}", source=str(path))
    return [runs[t] for t in sorted(runs)]
