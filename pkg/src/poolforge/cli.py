"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import jsonschema

from . import __version__
from ._fmt import fmt_float
from .metrics import Leaderboard, MetricId, evaluate_runs
from .pooling import build_pool, construct_qrels, pool_stats
from .predictor import (
    FeatureSchemaError,
    RegressionModel,
    feature_rows_to_csv,
    fit_ols,
    load_feature_rows,
    loto,
    predict,
    rows_from_curves,
)
from .rankcorr import RankingPair, kendall_tau, max_drop, max_rise, tau_ap
from .simulator import (
    ExperimentConfig,
    aggregate_curves,
    check_experiment,
    curve_to_csv,
    curves_summary_json,
    filter_runs,
    records_to_csv,
    run_experiment,
)
from .synthkit import SynthSpec, generate, write_collection
from .trec_io import CollectionMeta, TrecFormatError, load_manifest, load_runs_dir, parse_qrels, serialize_qrels

log = logging.getLogger("poolforge")

SEED_ENV = "POOLFORGE_SEED"

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "poolforge simulate config",
    "type": "object",
    "additionalProperties": False,
    "required": ["runs", "qrels", "manifest", "meta"],
    "properties": {
        "runs": {"type": "string", "description": "directory of run files"},
        "qrels": {"type": "string"},
        "manifest": {"type": "string"},
        "meta": {"type": "string"},
        "output": {"type": "string"},
        "formats": {
            "type": "array",
            "items": {"enum": ["csv", "json"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "n_samples": {"type": "integer", "minimum": 1},
        "group_counts": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "topic_sample_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "pool_depths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "metrics": {
            "type": "array",
            "items": {"enum": ["MAP_1000", "NDCG_10", "MAP", "NDCG"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "include_manual": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "redraw_topics": {"type": "boolean"},
        "nested_groups": {"type": "boolean"},
    },
}


class UsageError(Exception):
    """Bad flags, paths or config; maps to exit status 2."""


def _existing(path: str | None, flag: str, want_dir: bool = False) -> Path:
    if not path:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if want_dir and not p.is_dir():
        raise UsageError(f"{flag}: {path} is not a directory")
    if not want_dir and not p.is_file():
        raise UsageError(f"{flag}: {path} does not exist")
    return p


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_collection(runs_dir, manifest_path, qrels_path):
    manifest = load_manifest(_existing(manifest_path, "--manifest").read_bytes())
    runs = load_runs_dir(_existing(runs_dir, "--runs", want_dir=True), manifest)
    qp = _existing(qrels_path, "--qrels")
    official = parse_qrels(qp.read_bytes(), name=qp.stem, source=str(qp))
    return runs, official, manifest


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# -- pool ---------------------------------------------------------------------


def cmd_pool(args) -> int:
    runs, official, _ = _load_collection(args.runs, args.manifest, args.qrels)
    runs = filter_runs(runs, args.include_manual)
    if not runs:
        raise UsageError("no runs left after excluding manual runs")
    if args.groups != "all":
        wanted = {g.strip() for g in args.groups.split(",") if g.strip()}
        known = {r.group for r in runs}
        unknown = sorted(wanted - known)
        if unknown:
            raise UsageError(f"--groups: unknown group(s) {', '.join(unknown)}")
        runs = [r for r in runs if r.group in wanted]
    if args.topics:
        topics = {t.strip() for t in args.topics.split(",") if t.strip()}
    elif args.meta:
        topics = set(CollectionMeta.from_json(_existing(args.meta, "--meta").read_bytes()).topics)
    else:
        topics = set(official.topics).union(*(r.topics for r in runs))
    pool = build_pool(runs, topics, args.depth)
    q = construct_qrels(official, pool)
    stats = pool_stats(q, pool)
    out = Path(args.output)
    _write(out / "qrels.txt", serialize_qrels(q))
    doc = stats.to_dict()
    doc["percent_relevant"] = float(fmt_float(stats.percent_relevant))
    doc.update(depth=args.depth, pool_size=len(pool), groups=sorted(pool.contributing_groups), topics=len(topics))
    _write(out / "pool_stats.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


# -- eval / rankcorr ------------------------------------------------------------


def cmd_eval(args) -> int:
    runs, official, _ = _load_collection(args.runs, args.manifest, args.qrels)
    try:
        metric = MetricId.parse(args.metric)
    except ValueError:
        raise UsageError(f"--metric: unknown metric {args.metric!r}") from None
    board = evaluate_runs(runs, official, metric)
    text = board.to_json() if args.format == "json" else board.to_csv()
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_rankcorr(args) -> int:
    ref = Leaderboard.ranking_from_csv(_existing(args.reference, "--reference").read_text(encoding="utf-8"))
    est = Leaderboard.ranking_from_csv(_existing(args.estimate, "--estimate").read_text(encoding="utf-8"))
    try:
        pair = RankingPair(ref, est)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {
        "tau": float(fmt_float(kendall_tau(pair))),
        "tau_ap": float(fmt_float(tau_ap(pair))),
        "max_drop": max_drop(pair),
        "max_rise": max_rise(pair),
    }
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return 0


# -- simulate -----------------------------------------------------------------


def load_job_config(path: str | Path) -> dict:
    """Read and validate a simulate config; relative paths resolve against the config's folder."""
    path = _existing(str(path), "--config")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if problems:
        lines = []
        for e in problems:
            where = "config" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
            lines.append(f"{where}: {e.message}")
        raise UsageError("invalid config:\n  " + "\n  ".join(lines))
    base = path.parent
    for key in ("runs", "qrels", "manifest", "meta", "output"):
        if key in doc and not Path(doc[key]).is_absolute():
            doc[key] = str(base / doc[key])
    return doc


def cmd_simulate(args) -> int:
    job = load_job_config(args.config)
    for key in ("n_samples", "group_counts", "topic_sample_sizes", "pool_depths", "metrics",
                "include_manual", "redraw_topics", "nested_groups"):
        value = getattr(args, key)
        if value is not None:
            job[key] = value
    if args.seed is not None:
        job["seed"] = args.seed
    elif "seed" not in job:
        job["seed"] = _default_seed()
    if args.output:
        job["output"] = args.output
    if not job.get("output"):
        raise UsageError("no output directory: set 'output' in the config or pass --output")

    try:
        config = ExperimentConfig(**{f.name: job[f.name] for f in fields(ExperimentConfig) if f.name in job})
    except ValueError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    runs, official, _ = _load_collection(job["runs"], job["manifest"], job["qrels"])
    meta = CollectionMeta.from_json(_existing(job["meta"], "meta").read_bytes())

    try:
        check_experiment(config, runs, official, meta)
    except ValueError as exc:
        raise UsageError(f"invalid config: {exc}") from None
    records = run_experiment(config, runs, official, meta, jobs=args.jobs)
    curves = aggregate_curves(records)
    formats = set(job.get("formats", ["csv", "json"]))
    out = Path(job["output"])
    if "csv" in formats:
        _write(out / "trials.csv", records_to_csv(records))
        for curve in curves:
            _write(out / "curves" / f"curve_{curve.slug}.csv", curve_to_csv(curve))
        rows = rows_from_curves(curves, meta.name, meta.collection_size)
        if rows:
            _write(out / "features.csv", feature_rows_to_csv(rows))
    if "json" in formats:
        _write(out / "summary.json", curves_summary_json(curves))
    log.info("wrote %d trials and %d curves to %s", len(records), len(curves), out)
    return 0


# -- predict ------------------------------------------------------------------


def _read_features(paths: list[str]) -> dict:
    merged: dict = {}
    for p in paths:
        path = _existing(p, "--features")
        for name, rows in load_feature_rows(path.read_text(encoding="utf-8"), source=str(path)).items():
            merged.setdefault(name, []).extend(rows)
    return merged


def cmd_predict_fit(args) -> int:
    data = _read_features(args.features)
    rows = [r for rs in data.values() for r in rs]
    model = fit_ols(rows)
    _write(Path(args.model), model.to_json())
    return 0


def cmd_predict_apply(args) -> int:
    model = RegressionModel.from_json(_existing(args.model, "--model").read_text(encoding="utf-8"))
    for flag in ("groups", "topics", "depth", "corpus"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag} must be >= 1")
    pred = predict(model, args.groups, args.topics, args.depth, args.corpus)
    if pred.out_of_range:
        print(f"warning: raw prediction {fmt_float(pred.raw)} clamped to [-1, 1]", file=sys.stderr)
    print(fmt_float(pred.value))
    return 0


def cmd_predict_loto(args) -> int:
    data = _read_features(args.features)
    if len(data) < 2:
        raise UsageError(f"loto needs feature rows for at least two collections, got {len(data)}")
    report = loto(data)
    for row in report.rows:
        if row.n_clamped:
            log.warning("%s: %d prediction(s) clamped to [-1, 1]", row.held_out, row.n_clamped)
    text = report.to_csv()
    if args.output:
        _write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return 0


# -- synth --------------------------------------------------------------------


def cmd_synth(args) -> int:
    kwargs = {f.name: getattr(args, f.name) for f in fields(SynthSpec) if getattr(args, f.name, None) is not None}
    if "seed" not in kwargs:
        kwargs["seed"] = _default_seed()
    spec = SynthSpec(**kwargs)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_collection(generate(spec), args.output)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def collection_flags(p, meta=False):
        p.add_argument("--runs", required=True, help="directory of TREC run files")
        p.add_argument("--manifest", required=True, help="CSV run_tag,group,kind")
        p.add_argument("--qrels", required=True, help="official qrels file")
        if meta:
            p.add_argument("--meta", help="collection meta JSON (supplies the topic set)")

    p = sub.add_parser("pool", help="build a depth-k pool and its simulated qrels")
    collection_flags(p, meta=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--groups", default="all", help="'all' or comma-separated group ids")
    p.add_argument("--topics", help="comma-separated topic ids (default: meta topics, else all)")
    p.add_argument("--include-manual", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("eval", help="score runs and print a leaderboard")
    collection_flags(p)
    p.add_argument("--metric", default="MAP_1000", help="MAP_1000 or NDCG_10")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rankcorr", help="compare two leaderboard CSVs")
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.set_defaults(func=cmd_rankcorr)

    p = sub.add_parser("simulate", help="run the group down-sampling sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--group-counts", dest="group_counts", type=_int_list)
    p.add_argument("--topic-sizes", dest="topic_sample_sizes", type=_int_list)
    p.add_argument("--depths", dest="pool_depths", type=_int_list)
    p.add_argument("--metrics", type=lambda s: [v for v in s.split(",") if v])
    p.add_argument("--include-manual", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--redraw-topics", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--nested-groups", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="fit, apply or cross-validate the tau_ap regression")
    psub = p.add_subparsers(dest="predict_command", required=True)
    q = psub.add_parser("fit")
    q.add_argument("--features", nargs="+", required=True)
    q.add_argument("--model", required=True, help="output model JSON")
    q.set_defaults(func=cmd_predict_fit)
    q = psub.add_parser("apply")
    q.add_argument("--model", required=True)
    q.add_argument("--groups", type=int, required=True)
    q.add_argument("--topics", type=int, required=True)
    q.add_argument("--depth", type=int, required=True)
    q.add_argument("--corpus", type=int, required=True)
    q.set_defaults(func=cmd_predict_apply)
    q = psub.add_parser("loto")
    q.add_argument("--features", nargs="+", required=True)
    q.add_argument("--output")
    q.set_defaults(func=cmd_predict_loto)

    p = sub.add_parser("synth", help="generate a synthetic collection")
    p.add_argument("--output", required=True)
    for f in fields(SynthSpec):
        flag = "--" + f.name.replace("_", "-")
        ftype = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
        p.add_argument(flag, dest=f.name, type=ftype, default=None)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, TrecFormatError, FeatureSchemaError) as exc:
        print(f"poolforge {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("failure", exc_info=True)
        print(f"poolforge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
