"""Workload ingestion: log parsing, sessionization, sampling, dedup, splits.

A workload file is a delimited log of executed statements.  The pipeline
turns it into a deduplicated, labeled dataset:

    parse -> sessionize -> sample one per session -> dedup/aggregate -> split

Sessions follow the classic web-log convention: consecutive requests from
the same source belong to one session until a gap of more than 30 minutes.
Sampling one statement per session damps the weight of scripted clients
that fire the same query in a tight loop.
"""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

SESSION_GAP_S = 1800.0  # split only when the gap exceeds this, a gap of exactly 30:00 stays

# error label encoding used in the raw logs: -1 severe, 0 success, 1 non-severe
ERROR_CODE_TO_CLASS = {"-1": "severe", "0": "success", "1": "non_severe"}
ERROR_CLASSES = ("non_severe", "severe", "success")

SESSION_CLASSES = (
    "admin",
    "anonymous",
    "bot",
    "browser",
    "no_web_hit",
    "program",
    "unknown",
)

TASKS = ("error", "cpu", "rows", "session")
CLASSIFICATION_TASKS = ("error", "session")
REGRESSION_TASKS = ("cpu", "rows")

COLUMNS = (
    "source_key",
    "timestamp",
    "statement",
    "error",
    "busy",
    "rows",
    "session_class",
    "user_key",
    "opt_cost",
)


@dataclass
class QueryLogEntry:
    """One raw log row.  Only the statement is mandatory in the source file."""

    statement: str
    source_key: str = ""
    timestamp: Optional[datetime] = None
    error_class: Optional[str] = None
    cpu_time_s: Optional[float] = None
    answer_rows: Optional[float] = None
    session_class: Optional[str] = None
    user_key: Optional[str] = None
    opt_cost_estimate: Optional[float] = None


@dataclass
class Session:
    source_key: str
    entries: list[QueryLogEntry] = field(default_factory=list)


@dataclass
class LabeledQuery:
    """A unique statement with aggregated labels and its log multiplicity."""

    statement: str
    error_class: Optional[str] = None
    cpu_time_s: Optional[float] = None
    answer_rows: Optional[float] = None
    session_class: Optional[str] = None
    user_key: Optional[str] = None
    opt_cost_estimate: Optional[float] = None
    multiplicity: int = 1


@dataclass
class DatasetSplit:
    train: list[LabeledQuery]
    validation: list[LabeledQuery]
    test: list[LabeledQuery]
    setting: str = "homogeneous_instance"
    seed: int = 0

    def part(self, name: str) -> list[LabeledQuery]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown split part: {name!r}")
        return getattr(self, name)


SETTINGS = ("homogeneous_instance", "homogeneous_schema", "heterogeneous_schema")


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if not text:
        raise ValueError("empty timestamp")
    # ISO-8601; tolerate a trailing Z and a space separator
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_workload_file(path: str, fmt: str = "csv") -> tuple[list[QueryLogEntry], dict]:
    """Read a delimited workload log.

    The file must have a header row naming at least ``statement``; the other
    recognized columns (source_key, timestamp, error, busy, rows,
    session_class, user_key, opt_cost) are optional.  Malformed rows are
    skipped and tallied in the returned report; if more than half of the
    data rows are malformed the file is rejected outright.
    """
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unknown workload format: {fmt!r}")
    delimiter = "," if fmt == "csv" else "\t"

    entries: list[QueryLogEntry] = []
    reasons: dict[str, int] = {}
    total = 0

    def skip(reason: str) -> None:
        reasons[reason] = reasons.get(reason, 0) + 1

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter, quotechar='"', doublequote=True)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty workload file") from None
        header = [h.strip() for h in header]
        if "statement" not in header:
            raise ValueError(f"{path}: header is missing required column 'statement'")
        col = {name: header.index(name) for name in header if name in COLUMNS}

        for row in reader:
            total += 1
            if len(row) != len(header):
                skip("bad_field_count")
                continue

            def cell(name: str) -> Optional[str]:
                idx = col.get(name)
                return row[idx] if idx is not None else None

            statement = (cell("statement") or "").rstrip()
            if not statement:
                # the SDSS logs record empty submissions; keep them under a
                # fixed placeholder so they stay usable as model input
                statement = "Empty"

            timestamp = None
            raw_ts = cell("timestamp")
            if raw_ts is not None:
                try:
                    timestamp = _parse_timestamp(raw_ts)
                except ValueError:
                    skip("bad_timestamp")
                    continue

            error_class = None
            raw = cell("error")
            if raw is not None and raw.strip():
                key = raw.strip()
                if key not in ERROR_CODE_TO_CLASS:
                    skip("bad_error")
                    continue
                error_class = ERROR_CODE_TO_CLASS[key]

            cpu = None
            raw = cell("busy")
            if raw is not None and raw.strip():
                try:
                    cpu = float(raw)
                except ValueError:
                    skip("bad_cpu")
                    continue
                if not math.isfinite(cpu) or cpu < 0:
                    skip("bad_cpu")
                    continue

            rows_label = None
            raw = cell("rows")
            if raw is not None and raw.strip():
                try:
                    rows_label = float(raw)
                except ValueError:
                    skip("bad_rows")
                    continue
                if not math.isfinite(rows_label) or rows_label < -1:
                    skip("bad_rows")
                    continue

            session_class = None
            raw = cell("session_class")
            if raw is not None and raw.strip():
                key = raw.strip()
                if key not in SESSION_CLASSES:
                    skip("bad_session_class")
                    continue
                session_class = key

            opt_cost = None
            raw = cell("opt_cost")
            if raw is not None and raw.strip():
                try:
                    opt_cost = float(raw)
                except ValueError:
                    skip("bad_opt_cost")
                    continue
                if not math.isfinite(opt_cost) or opt_cost < 0:
                    skip("bad_opt_cost")
                    continue

            user_key = cell("user_key")
            user_key = user_key.strip() if user_key is not None and user_key.strip() else None
            source = cell("source_key")
            source = source.strip() if source is not None else ""

            entries.append(
                QueryLogEntry(
                    statement=statement,
                    source_key=source,
                    timestamp=timestamp,
                    error_class=error_class,
                    cpu_time_s=cpu,
                    answer_rows=rows_label,
                    session_class=session_class,
                    user_key=user_key,
                    opt_cost_estimate=opt_cost,
                )
            )

    skipped = total - len(entries)
    if total and skipped * 2 > total:
        raise ValueError(
            f"{path}: {skipped} of {total} rows malformed; refusing to ingest"
        )
    report = {
        "total_rows": total,
        "parsed": len(entries),
        "skipped": skipped,
        "skipped_by_reason": dict(sorted(reasons.items())),
    }
    return entries, report


def sessionize(entries: Iterable[QueryLogEntry], gap_s: float = SESSION_GAP_S) -> list[Session]:
    """Group entries into per-source sessions split on gaps greater than gap_s.

    Entries without a timestamp cannot be ordered, so each becomes its own
    singleton session (after the timestamped sessions of its source).
    """
    by_key: dict[str, list[tuple[int, QueryLogEntry]]] = {}
    for idx, entry in enumerate(entries):
        by_key.setdefault(entry.source_key, []).append((idx, entry))

    sessions: list[Session] = []
    for key in sorted(by_key):
        timed = [(i, e) for i, e in by_key[key] if e.timestamp is not None]
        untimed = [(i, e) for i, e in by_key[key] if e.timestamp is None]
        timed.sort(key=lambda pair: (pair[1].timestamp, pair[0]))

        current: Optional[Session] = None
        prev_ts = None
        for _, entry in timed:
            if current is not None and (entry.timestamp - prev_ts).total_seconds() > gap_s:
                sessions.append(current)
                current = None
            if current is None:
                current = Session(source_key=key)
            current.entries.append(entry)
            prev_ts = entry.timestamp
        if current is not None:
            sessions.append(current)
        for _, entry in untimed:
            sessions.append(Session(source_key=key, entries=[entry]))
    return sessions


def sample_one_per_session(sessions: list[Session], seed: int = 0) -> list[QueryLogEntry]:
    """Pick one entry uniformly at random from each session (seeded)."""
    rng = random.Random(seed)
    picked = []
    for session in sessions:
        if not session.entries:
            continue
        picked.append(session.entries[rng.randrange(len(session.entries))])
    return picked


def _majority(values: list[str], rng: random.Random) -> str:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    tied = sorted(v for v, c in counts.items() if c == best)
    if len(tied) == 1:
        return tied[0]
    return tied[rng.randrange(len(tied))]


def dedup_and_aggregate(entries: Iterable[QueryLogEntry], seed: int = 0) -> list[LabeledQuery]:
    """Merge duplicate statements, averaging numeric labels and majority-voting
    class labels (ties broken by a seeded draw).  Statement identity is exact
    text equality; trailing whitespace was already trimmed at parse time."""
    rng = random.Random(seed)
    groups: dict[str, list[QueryLogEntry]] = {}
    order: list[str] = []
    for entry in entries:
        if entry.statement not in groups:
            groups[entry.statement] = []
            order.append(entry.statement)
        groups[entry.statement].append(entry)

    out: list[LabeledQuery] = []
    for statement in order:
        members = groups[statement]

        def mean_of(attr: str) -> Optional[float]:
            vals = [getattr(e, attr) for e in members if getattr(e, attr) is not None]
            return sum(vals) / len(vals) if vals else None

        def vote_of(attr: str) -> Optional[str]:
            vals = [getattr(e, attr) for e in members if getattr(e, attr) is not None]
            return _majority(vals, rng) if vals else None

        out.append(
            LabeledQuery(
                statement=statement,
                error_class=vote_of("error_class"),
                cpu_time_s=mean_of("cpu_time_s"),
                answer_rows=mean_of("answer_rows"),
                session_class=vote_of("session_class"),
                user_key=vote_of("user_key"),
                opt_cost_estimate=mean_of("opt_cost_estimate"),
                multiplicity=len(members),
            )
        )
    return out


def _part_targets(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = math.floor(n * fractions[0])
    n_val = math.floor(n * fractions[1])
    n_test = math.floor(n * fractions[2])
    # floor leaves a remainder of at most two queries; they go to train
    n_train += n - (n_train + n_val + n_test)
    return n_train, n_val, n_test


def split(
    queries: list[LabeledQuery],
    setting: str = "homogeneous_instance",
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Partition queries into train/validation/test.

    Homogeneous settings shuffle uniformly.  The heterogeneous setting keys
    the shuffle on users so no user's statements span two parts: users are
    assigned whole to train until its target size is reached, then to
    validation, and the remainder to test.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting: {setting!r}")
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError(f"split fractions must be non-negative and sum to 1: {fractions}")
    if len(queries) < 3:
        raise ValueError("need at least 3 queries to split")

    rng = random.Random(seed)

    if setting in ("homogeneous_instance", "homogeneous_schema"):
        order = list(range(len(queries)))
        rng.shuffle(order)
        n_train, n_val, _ = _part_targets(len(queries), fractions)
        shuffled = [queries[i] for i in order]
        return DatasetSplit(
            train=shuffled[:n_train],
            validation=shuffled[n_train : n_train + n_val],
            test=shuffled[n_train + n_val :],
            setting=setting,
            seed=seed,
        )

    # heterogeneous_schema: by-user split
    missing = sum(1 for q in queries if q.user_key is None)
    if missing:
        raise ValueError(
            f"heterogeneous_schema split requires user_key on every query; {missing} missing"
        )
    by_user: dict[str, list[LabeledQuery]] = {}
    for q in queries:
        by_user.setdefault(q.user_key, []).append(q)
    users = sorted(by_user)
    if len(users) < 3:
        raise ValueError("need at least 3 distinct users for a by-user split")
    rng.shuffle(users)

    n_train, n_val, _ = _part_targets(len(queries), fractions)
    parts: dict[str, list[LabeledQuery]] = {"train": [], "validation": [], "test": []}
    current = "train"
    for user in users:
        if current == "train" and len(parts["train"]) >= n_train:
            current = "validation"
        if current == "validation" and len(parts["validation"]) >= n_val:
            current = "test"
        parts[current].extend(by_user[user])
    return DatasetSplit(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        setting=setting,
        seed=seed,
    )


def task_type(task: str) -> str:
    if task in CLASSIFICATION_TASKS:
        return "classification"
    if task in REGRESSION_TASKS:
        return "regression"
    raise ValueError(f"unknown task: {task!r}")


def task_label(query: LabeledQuery, task: str):
    """The label of `query` for a task, or None when the log lacked it."""
    if task == "error":
        return query.error_class
    if task == "cpu":
        return query.cpu_time_s
    if task == "rows":
        return query.answer_rows
    if task == "session":
        return query.session_class
    raise ValueError(f"unknown task: {task!r}")


def label_stats(queries: list[LabeledQuery], task: str) -> dict:
    """Distribution summary for one task's labels over a dataset."""
    values = [task_label(q, task) for q in queries]
    values = [v for v in values if v is not None]
    if not values:
        raise ValueError(f"no labels present for task {task!r}")
    if task_type(task) == "classification":
        counts: dict[str, int] = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        total = len(values)
        return {
            "task": task,
            "count": total,
            "class_counts": dict(sorted(counts.items())),
            "class_shares": {k: c / total for k, c in sorted(counts.items())},
        }
    return {
        "task": task,
        "count": len(values),
        "min": min(values),
        "median": statistics.median(values),
        "mean": sum(values) / len(values),
        "max": max(values),
    }


# --- dataset (de)serialization ------------------------------------------------

def _query_to_record(q: LabeledQuery, part: str) -> dict:
    return {
        "statement": q.statement,
        "error_class": q.error_class,
        "cpu_time_s": q.cpu_time_s,
        "answer_rows": q.answer_rows,
        "session_class": q.session_class,
        "user_key": q.user_key,
        "opt_cost_estimate": q.opt_cost_estimate,
        "multiplicity": q.multiplicity,
        "part": part,
    }


def save_dataset(split_: DatasetSplit, path: str) -> None:
    """Write a split dataset as JSON lines, parts in train/validation/test order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "kind": "sqlsight.dataset",
                    "format_version": 1,
                    "setting": split_.setting,
                    "seed": split_.seed,
                },
                sort_keys=True,
            )
            + "\n"
        )
        for part in ("train", "validation", "test"):
            for q in split_.part(part):
                fh.write(json.dumps(_query_to_record(q, part), sort_keys=True) + "\n")


def load_dataset(path: str) -> DatasetSplit:
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
        if not head:
            raise ValueError(f"{path}: empty dataset file")
        meta = json.loads(head)
        if meta.get("kind") != "sqlsight.dataset":
            raise ValueError(f"{path}: not a sqlsight dataset file")
        out = DatasetSplit(
            train=[], validation=[], test=[],
            setting=meta.get("setting", "homogeneous_instance"),
            seed=meta.get("seed", 0),
        )
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            q = LabeledQuery(
                statement=rec["statement"],
                error_class=rec.get("error_class"),
                cpu_time_s=rec.get("cpu_time_s"),
                answer_rows=rec.get("answer_rows"),
                session_class=rec.get("session_class"),
                user_key=rec.get("user_key"),
                opt_cost_estimate=rec.get("opt_cost_estimate"),
                multiplicity=rec.get("multiplicity", 1),
            )
            out.part(rec["part"]).append(q)
    return out
