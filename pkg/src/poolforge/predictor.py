"""Linear model predicting tau_ap from (groups, topics, pool depth, corpus size)."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ._fmt import fmt_float
from .metrics import MetricId

FEATURES = ("groups", "topics", "depth", "corpus_size")
FEATURE_HEADER = ["collection", "groups", "topics", "depth", "corpus_size", "tau_ap"]
MODEL_FORMAT_VERSION = 1
MIN_ROWS = 5
_NORMAL_EQ_COND_LIMIT = 1e8
_RANK_TOL = 1e-10


class RankDeficientDesign(ValueError):
    def __init__(self, features: Sequence[str]):
        self.features = tuple(features)
        super().__init__(f"design matrix is rank deficient; collinear features: {', '.join(self.features)}")


class FeatureSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureRow:
    collection: str
    groups: int
    topics: int
    depth: int
    corpus_size: int
    target_tau_ap: float

    def __post_init__(self):
        for name in FEATURES:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not -1.0 <= self.target_tau_ap <= 1.0:
            raise ValueError(f"tau_ap target {self.target_tau_ap} outside [-1, 1]")

    @property
    def features(self) -> tuple[int, int, int, int]:
        return (self.groups, self.topics, self.depth, self.corpus_size)


class Prediction(NamedTuple):
    value: float
    raw: float
    out_of_range: bool


@dataclass(frozen=True)
class RegressionModel:
    """Affine model in raw features; the standardised fit it came from is kept for checking."""

    weights: tuple[float, float, float, float, float]
    feature_means: tuple[float, ...]
    feature_scales: tuple[float, ...]
    coef_standardized: tuple[float, ...]
    target_mean: float
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        if any(s <= 0 for s in self.feature_scales):
            raise ValueError("feature scales must be positive")

    def raw_value(self, g: float, t: float, p: float, c: float) -> float:
        w = self.weights
        return w[0] + w[1] * g + w[2] * t + w[3] * p + w[4] * c

    def standardized_value(self, g: float, t: float, p: float, c: float) -> float:
        x = (g, t, p, c)
        return self.target_mean + math.fsum(
            b * (xi - m) / s
            for b, xi, m, s in zip(self.coef_standardized, x, self.feature_means, self.feature_scales)
        )

    def to_json(self) -> str:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "weights": dict(zip(("intercept",) + FEATURES, self.weights)),
            "transform": {
                name: {"mean": m, "scale": s}
                for name, m, s in zip(FEATURES, self.feature_means, self.feature_scales)
            },
            "coef_standardized": dict(zip(FEATURES, self.coef_standardized)),
            "target_mean": self.target_mean,
            "dropped_features": list(self.dropped),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        w = doc["weights"]
        tr = doc["transform"]
        return cls(
            weights=tuple(float(w[k]) for k in ("intercept",) + FEATURES),
            feature_means=tuple(float(tr[f]["mean"]) for f in FEATURES),
            feature_scales=tuple(float(tr[f]["scale"]) for f in FEATURES),
            coef_standardized=tuple(float(doc["coef_standardized"][f]) for f in FEATURES),
            target_mean=float(doc["target_mean"]),
            dropped=tuple(doc.get("dropped_features", [])),
        )


def design_matrix(rows: Sequence[FeatureRow]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features for r in rows], dtype=np.float64)
    y = np.array([r.target_tau_ap for r in rows], dtype=np.float64)
    return X, y


def fit_ols(rows: Sequence[FeatureRow]) -> RegressionModel:
    """Least squares on z-scored features, mapped back to raw-feature weights.

    Constant feature columns cannot be separated from the intercept; they get weight 0
    and a warning. Collinear non-constant columns raise RankDeficientDesign.
    """
    if len(rows) < MIN_ROWS:
        raise ValueError(f"need at least {MIN_ROWS} rows to fit, got {len(rows)}")
    X, y = design_matrix(rows)
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    constant = scales <= 1e-12 * np.maximum(1.0, np.abs(means))
    if constant.any():
        names = [f for f, c in zip(FEATURES, constant) if c]
        warnings.warn(f"dropping constant feature column(s): {', '.join(names)}", stacklevel=2)
    scales = np.where(constant, 1.0, scales)
    active = np.flatnonzero(~constant)

    y_mean = float(y.mean())
    coef = np.zeros(len(FEATURES))
    if active.size:
        Z = (X[:, active] - means[active]) / scales[active]
        yc = y - y_mean
        _, sv, vt = np.linalg.svd(Z, full_matrices=False)
        if sv[-1] <= _RANK_TOL * sv[0]:
            null = np.abs(vt[-1])
            involved = [FEATURES[active[k]] for k in np.flatnonzero(null > 1e-6 * null.max())]
            raise RankDeficientDesign(involved)
        gram = Z.T @ Z
        if np.linalg.cond(gram) <= _NORMAL_EQ_COND_LIMIT:
            b = np.linalg.solve(gram, Z.T @ yc)
        else:
            b = np.linalg.lstsq(Z, yc, rcond=None)[0]
        coef[active] = b

    raw = coef / scales
    w0 = y_mean - float(np.dot(raw, means))
    return RegressionModel(
        weights=(w0, *map(float, raw)),
        feature_means=tuple(map(float, means)),
        feature_scales=tuple(map(float, scales)),
        coef_standardized=tuple(map(float, coef)),
        target_mean=y_mean,
        dropped=tuple(f for f, c in zip(FEATURES, constant) if c),
    )


def predict(model: RegressionModel, g: float, t: float, p: float, c: float) -> Prediction:
    """Model output clamped to [-1, 1]; ``out_of_range`` flags a clamp."""
    raw = model.raw_value(g, t, p, c)
    value = min(1.0, max(-1.0, raw))
    return Prediction(value, raw, value != raw)


def mse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} targets")
    if not predicted:
        raise ValueError("mse of empty lists")
    return math.fsum((p - a) * (p - a) for p, a in zip(predicted, actual)) / len(predicted)


@dataclass(frozen=True)
class LotoRow:
    held_out: str
    shares_corpus_with_training: bool
    mse: float
    training: tuple[str, ...] = ()
    n_rows: int = 0
    n_clamped: int = 0


@dataclass(frozen=True)
class LotoReport:
    rows: tuple[LotoRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["held_out", "shares_corpus", "mse"])
        for r in self.rows:
            w.writerow([r.held_out, "yes" if r.shares_corpus_with_training else "no", fmt_float(r.mse)])
        return buf.getvalue()


def loto(
    datasets: Mapping[str, Sequence[FeatureRow]],
    corpus_ids: Mapping[str, str] | None = None,
) -> LotoReport:
    """Leave-one-collection-out: fit on the other collections, score MSE on the held-out one.

    Corpus identity defaults to the corpus size, which is how collections built on the
    same document collection are recognised when no explicit ids are given.
    """
    if len(datasets) < 2:
        raise ValueError("leave-one-collection-out needs at least two collections")
    for name, rows in datasets.items():
        if not rows:
            raise ValueError(f"collection {name!r} has no rows")

    def corpus_of(name: str) -> frozenset[str]:
        if corpus_ids is not None and name in corpus_ids:
            return frozenset([corpus_ids[name]])
        return frozenset(f"size:{r.corpus_size}" for r in datasets[name])

    out = []
    for held in datasets:
        others = [c for c in datasets if c != held]
        train = [r for c in others for r in datasets[c]]
        held_ids = {id(r) for r in datasets[held]}
        assert not any(id(r) in held_ids for r in train), "held-out rows leaked into training"
        model = fit_ols(train)
        preds = [predict(model, *r.features) for r in datasets[held]]
        shares = bool(corpus_of(held) & frozenset().union(*(corpus_of(c) for c in others)))
        out.append(
            LotoRow(
                held_out=held,
                shares_corpus_with_training=shares,
                mse=mse([p.value for p in preds], [r.target_tau_ap for r in datasets[held]]),
                training=tuple(others),
                n_rows=len(preds),
                n_clamped=sum(p.out_of_range for p in preds),
            )
        )
    return LotoReport(tuple(out))


def load_feature_rows(text: str, source: str = "<features>") -> dict[str, list[FeatureRow]]:
    """Parse ``collection,groups,topics,depth,corpus_size,tau_ap`` CSV into rows per collection."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != FEATURE_HEADER:
        raise FeatureSchemaError(f"{source}: header must be {','.join(FEATURE_HEADER)}")
    out: dict[str, list[FeatureRow]] = {}
    for line_no, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(FEATURE_HEADER):
            raise FeatureSchemaError(f"{source}:{line_no}: expected {len(FEATURE_HEADER)} fields, got {len(rec)}")
        name = rec[0].strip()
        if not name:
            raise FeatureSchemaError(f"{source}:{line_no}: empty collection name")
        try:
            row = FeatureRow(name, *(int(v) for v in rec[1:5]), float(rec[5]))
        except ValueError as exc:
            raise FeatureSchemaError(f"{source}:{line_no}: {exc}") from None
        out.setdefault(name, []).append(row)
    return out


def feature_rows_to_csv(rows: Iterable[FeatureRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_HEADER)
    for r in rows:
        w.writerow([r.collection, r.groups, r.topics, r.depth, r.corpus_size, fmt_float(r.target_tau_ap)])
    return buf.getvalue()


def rows_from_curves(curves, collection: str, corpus_size: int, metric: MetricId = MetricId.MAP_1000) -> list[FeatureRow]:
    """One training row per learning-curve point: (g, m, p, C) -> mean tau_ap."""
    rows = []
    for curve in curves:
        if curve.metric is not metric:
            continue
        for pt in curve.points:
            rows.append(FeatureRow(collection, pt.g, curve.topic_size, curve.depth, corpus_size, pt.mean_tau_ap))
    return rows
