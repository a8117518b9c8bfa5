"""Command-line interface.

    sqlsight ingest    raw workload log -> canonical split dataset
    sqlsight profile   dataset -> syntactic profiles + property correlations
    sqlsight train     dataset -> model bundle (grid-searched on validation)
    sqlsight evaluate  bundle + dataset -> metric reports
    sqlsight predict   bundle(s) + statement -> prediction JSON on stdout
    sqlsight serve     bundle(s) -> local HTTP prediction service

Every writing command drops a manifest.json (arguments, input hashes,
package version) into its output directory so a run can be reproduced
exactly; nothing written embeds wall-clock time, so rerunning with the
same seed gives byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import os
import statistics
import sys

import numpy as np

from sqlsight import __version__, metrics, sqltext, workload
from sqlsight.learn import bundle as bundle_mod
from sqlsight.learn.training import (
    DEFAULT_MAX_LEN,
    MODEL_KINDS,
    TrainConfig,
    default_hyperparameters,
    granularity_of,
    train,
)

# hyperparameter values with documented support; anything else needs --allow-custom
GRID_VALUES = {
    "hidden_size": (150, 300),
    "kernels_per_window": (100, 250),
    "dropout": (0.5, 0.0),
    "clip_norm": (0.25, 0.0),
    "embed_dim": (100,),
}


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_manifest(out_dir: str, command: str, args: dict, inputs: dict[str, str]) -> None:
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "command": command,
            "arguments": args,
            "input_sha256": {k: _sha256_file(v) for k, v in inputs.items()},
            "package_version": __version__,
        },
    )


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated fractions, got {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_values(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


# --- ingest -------------------------------------------------------------------

def cmd_ingest(args) -> int:
    entries, skip_report = workload.parse_workload_file(args.workload, args.format)
    sessions = workload.sessionize(entries, gap_s=args.gap_s)
    sampled = workload.sample_one_per_session(sessions, seed=args.seed)
    queries = workload.dedup_and_aggregate(sampled, seed=args.seed)
    split = workload.split(queries, args.setting, _parse_fractions(args.fractions), args.seed)

    os.makedirs(args.out, exist_ok=True)
    dataset_path = os.path.join(args.out, "dataset.jsonl")
    workload.save_dataset(split, dataset_path)

    stats: dict = {
        "pipeline": {
            "entries_parsed": len(entries),
            "sessions": len(sessions),
            "sampled": len(sampled),
            "unique_statements": len(queries),
            "parts": {
                "train": len(split.train),
                "validation": len(split.validation),
                "test": len(split.test),
            },
        },
        "labels": {},
    }
    for task in workload.TASKS:
        try:
            stats["labels"][task] = workload.label_stats(queries, task)
        except ValueError:
            continue
    _write_json(os.path.join(args.out, "skip_report.json"), skip_report)
    _write_json(os.path.join(args.out, "stats.json"), stats)
    _write_manifest(
        args.out,
        "ingest",
        {
            "workload": os.path.abspath(args.workload),
            "format": args.format,
            "setting": args.setting,
            "fractions": args.fractions,
            "seed": args.seed,
            "gap_s": args.gap_s,
        },
        {"workload": args.workload},
    )
    print(
        f"ingested {len(entries)} entries -> {len(sessions)} sessions -> "
        f"{len(queries)} unique statements "
        f"(train/validation/test = {len(split.train)}/{len(split.validation)}/{len(split.test)})"
    )
    print(f"dataset written to {dataset_path}")
    return 0


# --- profile ------------------------------------------------------------------

def cmd_profile(args) -> int:
    split = workload.load_dataset(args.dataset)
    os.makedirs(args.out, exist_ok=True)

    rows = []
    profiles = []
    for part in ("train", "validation", "test"):
        for q in split.part(part):
            profile = sqltext.parse_syntactic_profile(q.statement)
            profiles.append(profile)
            rows.append((part, profile))

    with open(os.path.join(args.out, "profiles.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("part",) + sqltext.PROFILE_FIELDS + ("parse_failed",))
        for part, profile in rows:
            d = profile.to_dict()
            writer.writerow(
                [part]
                + [int(d[f]) if f != "nested_aggregation" else int(d[f]) for f in sqltext.PROFILE_FIELDS]
                + [int(profile.parse_failed)]
            )

    corr = sqltext.property_correlation_matrix(profiles)
    with open(os.path.join(args.out, "correlation.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("property",) + sqltext.PROFILE_FIELDS)
        for name, row in zip(sqltext.PROFILE_FIELDS, corr):
            writer.writerow([name] + [f"{v:.6f}" for v in row])

    per_field = {}
    for i, name in enumerate(sqltext.PROFILE_FIELDS):
        values = [p.vector()[i] for p in profiles]
        per_field[name] = {
            "min": min(values),
            "median": statistics.median(values),
            "mean": sum(values) / len(values),
            "max": max(values),
        }
    _write_json(
        os.path.join(args.out, "property_stats.json"),
        {
            "count": len(profiles),
            "parse_failed": sum(1 for p in profiles if p.parse_failed),
            "properties": per_field,
        },
    )
    _write_manifest(
        args.out, "profile",
        {"dataset": os.path.abspath(args.dataset)},
        {"dataset": args.dataset},
    )
    print(f"profiled {len(profiles)} statements; outputs in {args.out}")
    return 0


# --- train --------------------------------------------------------------------

def _check_grid(name: str, values: list[float], allow_custom: bool) -> None:
    allowed = GRID_VALUES[name]
    for v in values:
        if v not in allowed and not allow_custom:
            raise ValueError(
                f"{name}={v:g} is outside the supported grid {allowed}; "
                f"pass --allow-custom to use it anyway"
            )


def _grid_for(kind: str, args) -> list[dict]:
    """Cartesian hyperparameter grid for one model kind, CLI flags narrowing
    the documented value sets."""
    allow = args.allow_custom
    clip_values = _parse_values(args.clip)
    _check_grid("clip_norm", clip_values, allow)

    if kind in ("mfreq", "median", "opt"):
        return [{"clip_norm": clip_values[0]}]
    if kind in ("ctfidf", "wtfidf"):
        return [{"clip_norm": c} for c in clip_values]

    embed = args.embed_dim
    _check_grid("embed_dim", [embed], allow)
    if kind in ("ccnn", "wcnn"):
        kernels = [int(v) for v in _parse_values(args.kernels)]
        dropout = _parse_values(args.dropout)
        _check_grid("kernels_per_window", kernels, allow)
        _check_grid("dropout", dropout, allow)
        return [
            {"kernels_per_window": k, "dropout": d, "clip_norm": c, "embed_dim": embed}
            for k, d, c in itertools.product(kernels, dropout, clip_values)
        ]
    hidden = [int(v) for v in _parse_values(args.hidden)]
    _check_grid("hidden_size", hidden, allow)
    return [
        {"hidden_size": h, "clip_norm": c, "embed_dim": embed}
        for h, c in itertools.product(hidden, clip_values)
    ]


def cmd_train(args) -> int:
    split = workload.load_dataset(args.dataset)
    grid = _grid_for(args.model, args)

    trials = []
    best = None
    for hyper in grid:
        config = TrainConfig(
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            clip_norm=hyper.pop("clip_norm"),
            max_epochs=args.max_epochs,
            patience=args.patience,
            seed=args.seed,
            max_len=args.max_len,
        )
        full_hyper = dict(hyper)
        if args.vocab_size is not None and args.model not in ("mfreq", "median", "opt"):
            full_hyper["vocab_size"] = args.vocab_size
        bundle, log = train(args.model, split, args.task, config, full_hyper)
        val = log.get("best_validation_loss")
        trials.append(
            {
                "hyperparameters": bundle.hyperparameters,
                "clip_norm": config.clip_norm,
                "best_validation_loss": val,
                "best_epoch": log.get("best_epoch"),
                "epochs_run": len(log.get("epochs", [])),
            }
        )
        score = val if val is not None else float("-inf")
        if best is None or (score is not None and score < best[0]):
            best = (score, bundle, log, config)

    _, bundle, log, config = best
    os.makedirs(args.out, exist_ok=True)
    bundle_path = bundle_mod.save_bundle(bundle, args.out)
    _write_json(
        os.path.join(args.out, "training_log.json"),
        {
            "model": args.model,
            "task": args.task,
            "trials": trials,
            "selected": {
                "hyperparameters": bundle.hyperparameters,
                "clip_norm": config.clip_norm,
                "best_validation_loss": log.get("best_validation_loss"),
                "best_epoch": log.get("best_epoch"),
            },
            "epochs": log.get("epochs", []),
        },
    )
    _write_manifest(
        args.out, "train",
        {
            "dataset": os.path.abspath(args.dataset),
            "task": args.task,
            "model": args.model,
            "seed": args.seed,
        },
        {"dataset": args.dataset},
    )
    loss = log.get("best_validation_loss")
    loss_text = f"{loss:.6f}" if isinstance(loss, float) else "n/a"
    print(
        f"trained {args.model} on task {args.task}: "
        f"{len(trials)} grid trial(s), best validation loss {loss_text}"
    )
    print(f"bundle written to {bundle_path}")
    return 0


# --- evaluate -------------------------------------------------------------------

def _evaluation_rows(bundle, split, part: str):
    queries = [
        q for q in split.part(part) if workload.task_label(q, bundle.task) is not None
    ]
    if bundle.model_kind == "opt":
        queries = [q for q in queries if q.opt_cost_estimate is not None]
    if not queries:
        raise ValueError(f"no {part} examples carry a {bundle.task!r} label")
    statements = [q.statement for q in queries]
    costs = [q.opt_cost_estimate for q in queries]
    results = bundle_mod.predict_many(bundle, statements, costs)
    return queries, results


def cmd_evaluate(args) -> int:
    bundle_path = bundle_mod.resolve_bundle_path(args.bundle)
    bundle = bundle_mod.load_bundle(bundle_path)
    split = workload.load_dataset(args.dataset)
    queries, results = _evaluation_rows(bundle, split, args.part)
    truths = [workload.task_label(q, bundle.task) for q in queries]

    os.makedirs(args.out, exist_ok=True)
    v = bundle.metrics.get("vocabulary_size", 0)
    p = bundle.parameter_count()

    if bundle.task_type == "classification":
        preds = [r["predicted_class"] for r in results]
        dists = [r["distribution"] for r in results]
        report = metrics.classification_report(truths, preds, dists)
        report["model"] = bundle.model_kind
        report["task"] = bundle.task
        _write_json(os.path.join(args.out, "report.json"), report)
        with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            classes = report["classes"]
            writer.writerow(
                ["model", "v", "p", "loss", "accuracy"] + [f"f1_{c}" for c in classes]
            )
            writer.writerow(
                [bundle.model_kind, v, p,
                 f"{report['cross_entropy']:.6f}", f"{report['accuracy']:.6f}"]
                + [f"{report['per_class'][c]['f1']:.6f}" for c in classes]
            )
        summary = f"accuracy {report['accuracy']:.4f}, cross-entropy {report['cross_entropy']:.4f}"
    else:
        pred_raw = [r["value"] for r in results]
        pred_z = [r["value_transformed"] for r in results]
        transform = bundle.transform
        truth_z = transform.apply(np.clip(np.array(truths, float), transform.y_min, None))
        report = metrics.regression_report(truth_z, pred_z, truths, pred_raw)
        report["model"] = bundle.model_kind
        report["task"] = bundle.task
        _write_json(os.path.join(args.out, "report.json"), report)
        with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "v", "p", "loss", "mse"])
            writer.writerow([bundle.model_kind, v, p,
                             f"{report['huber']:.6f}", f"{report['mse']:.6f}"])
        with open(os.path.join(args.out, "qerror.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            pcts = sorted(report["qerror"]["percentiles"], key=int)
            writer.writerow(["model"] + [f"p{x}" for x in pcts] + ["max"])
            writer.writerow(
                [bundle.model_kind]
                + [f"{report['qerror']['percentiles'][x]:.6f}" for x in pcts]
                + [f"{report['qerror']['max']:.6f}"]
            )
        summary = f"huber {report['huber']:.4f}, mse {report['mse']:.4f}"

    if args.breakdown:
        _write_breakdown(args, bundle, queries, truths, results)

    _write_manifest(
        args.out, "evaluate",
        {
            "bundle": os.path.abspath(bundle_path),
            "dataset": os.path.abspath(args.dataset),
            "part": args.part,
            "breakdown": args.breakdown,
        },
        {"bundle": bundle_path, "dataset": args.dataset},
    )
    print(f"evaluated {bundle.model_kind} on {args.part} ({len(queries)} examples): {summary}")
    return 0


def _write_breakdown(args, bundle, queries, truths, results) -> None:
    spec = args.breakdown
    if spec == "session_class":
        keys = [q.session_class or "unknown" for q in queries]
    elif spec.startswith("property:"):
        name = spec.split(":", 1)[1]
        if name not in sqltext.PROFILE_FIELDS:
            raise ValueError(f"unknown profile property: {name!r}")
        idx = sqltext.PROFILE_FIELDS.index(name)
        values = [sqltext.parse_syntactic_profile(q.statement).vector()[idx] for q in queries]
        keys = metrics.log_buckets(values)
    else:
        raise ValueError(
            f"breakdown must be 'session_class' or 'property:<name>', got {spec!r}"
        )

    if bundle.task_type == "classification":
        preds = [r["predicted_class"] for r in results]
        table = metrics.breakdown(keys, truths, preds, "classification")
        metric_col = "accuracy"
    else:
        transform = bundle.transform
        truth_z = transform.apply(np.clip(np.array(truths, float), transform.y_min, None))
        pred_z = [r["value_transformed"] for r in results]
        table = metrics.breakdown(keys, list(truth_z), pred_z, "regression")
        metric_col = "mse"

    with open(os.path.join(args.out, "breakdown.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "count", metric_col, "low_confidence"])
        for key, row in table.items():
            writer.writerow([key, row["count"], f"{row[metric_col]:.6f}",
                             int(row["low_confidence"])])


# --- predict / serve -------------------------------------------------------------

def _load_bundles(paths: list[str]) -> list:
    bundles = []
    seen_tasks = {}
    for path in paths:
        b = bundle_mod.load_bundle(path)
        if b.task in seen_tasks:
            print(
                f"warning: task {b.task!r} provided twice; keeping the later bundle",
                file=sys.stderr,
            )
            bundles[seen_tasks[b.task]] = b
        else:
            seen_tasks[b.task] = len(bundles)
            bundles.append(b)
    return bundles


def cmd_predict(args) -> int:
    bundles = _load_bundles(args.bundle)
    statement = args.statement if args.statement is not None else sys.stdin.read()
    if not statement.strip():
        raise ValueError("no statement given (pass --statement or pipe text on stdin)")
    payload = bundle_mod.predict_payload(bundles, statement, args.opt_cost)
    sys.stdout.write(bundle_mod.payload_json(payload))
    return 0


def cmd_serve(args) -> int:
    from sqlsight.serve import run_server

    bundles = _load_bundles(args.bundle)
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--bind must look like host:port, got {args.bind!r}")
    ui_dir = args.ui
    if ui_dir is not None and not os.path.isdir(ui_dir):
        raise ValueError(f"--ui directory does not exist: {ui_dir}")
    tasks = ", ".join(sorted(b.task for b in bundles))
    print(f"serving {len(bundles)} bundle(s) [{tasks}] on http://{host}:{port_text}/")
    run_server(host, int(port_text), bundles, ui_dir)
    return 0


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlsight",
        description="Predict SQL query properties (errors, cost, answer size, session kind) "
                    "from statement text before execution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a workload log into a split dataset")
    p.add_argument("--workload", required=True, help="workload log file")
    p.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p.add_argument("--setting", choices=workload.SETTINGS, default="homogeneous_instance")
    p.add_argument("--fractions", default="0.8,0.1,0.1",
                   help="train,validation,test fractions (default 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-s", type=float, default=workload.SESSION_GAP_S,
                   help="session gap threshold in seconds (default 1800)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("profile", help="syntactic profiles and property correlations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train", help="train one model kind on one task")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", choices=workload.TASKS, required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", default="150,300", help="LSTM hidden sizes to try")
    p.add_argument("--kernels", default="100,250", help="CNN kernels per window to try")
    p.add_argument("--dropout", default="0.5,0", help="CNN dropout rates to try")
    p.add_argument("--clip", default="0.25", help="gradient clip norms to try (0 disables)")
    p.add_argument("--embed-dim", type=int, default=100)
    p.add_argument("--vocab-size", type=int, default=None,
                   help="vocabulary cap (defaults depend on model kind)")
    p.add_argument("--max-len", type=int, default=None,
                   help=f"token truncation length (defaults: {DEFAULT_MAX_LEN})")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--allow-custom", action="store_true",
                   help="permit hyperparameter values outside the supported grids")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metric reports for a bundle on a dataset part")
    p.add_argument("--bundle", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--part", choices=("train", "validation", "test"), default="test")
    p.add_argument("--breakdown", default=None,
                   help="'session_class' or 'property:<profile field>'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict properties of one statement")
    p.add_argument("--bundle", action="append", required=True,
                   help="bundle JSON path (repeat for several tasks)")
    p.add_argument("--statement", default=None, help="statement text (default: stdin)")
    p.add_argument("--opt-cost", type=float, default=None,
                   help="planner cost estimate, required by opt bundles")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="HTTP prediction service (plus optional UI)")
    p.add_argument("--bundle", action="append", required=True)
    p.add_argument("--bind", default="127.0.0.1:8765")
    p.add_argument("--ui", default=None, help="directory with a static UI to serve under /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
