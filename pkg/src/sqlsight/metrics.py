"""Evaluation reports.

Classification: accuracy, per-class precision/recall/F1, confusion counts,
and mean cross-entropy when class distributions are available.

Regression: Huber and MSE in transform space, plus the q-error spread in
raw label space.  The q-error of a prediction is the factor by which it
misses the truth, whichever direction is worse, with both operands clamped
to at least 1 so zero/sentinel labels cannot divide by zero:

    qerror = max(truth/pred, pred/truth)     (after clamping)

Percentiles are nearest-rank, matching how such tables are usually quoted.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from sqlsight.learn.transforms import huber_loss

QERROR_PERCENTILES = (50, 75, 80, 85, 90, 95)
MIN_GROUP_SIZE = 10  # breakdown groups smaller than this are flagged


def classification_report(
    truths: Sequence[str],
    predictions: Sequence[str],
    distributions: Optional[Sequence[dict]] = None,
) -> dict:
    if len(truths) != len(predictions) or not truths:
        raise ValueError("need equally many truths and predictions, at least one each")
    classes = sorted(set(truths) | set(predictions))
    confusion = {t: {p: 0 for p in classes} for t in classes}
    for t, p in zip(truths, predictions):
        confusion[t][p] += 1

    per_class = {}
    for c in classes:
        tp = confusion[c][c]
        fp = sum(confusion[t][c] for t in classes if t != c)
        fn = sum(confusion[c][p] for p in classes if p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": sum(confusion[c].values()),
        }

    report = {
        "count": len(truths),
        "accuracy": sum(confusion[c][c] for c in classes) / len(truths),
        "classes": classes,
        "per_class": per_class,
        "confusion": confusion,
    }
    if distributions is not None:
        if len(distributions) != len(truths):
            raise ValueError("one distribution per example required")
        nll = 0.0
        for t, dist in zip(truths, distributions):
            nll -= math.log(max(dist.get(t, 0.0), 1e-12))
        report["cross_entropy"] = nll / len(truths)
    return report


def qerror(truth: float, prediction: float) -> float:
    t = max(float(truth), 1.0)
    p = max(float(prediction), 1.0)
    return max(t / p, p / t)


def nearest_rank_percentile(sorted_values: Sequence[float], percentile: float) -> float:
    if not len(sorted_values):
        raise ValueError("no values to take a percentile of")
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile out of range: {percentile}")
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    return float(sorted_values[max(rank, 1) - 1])


def qerror_table(
    truths_raw: Sequence[float],
    predictions_raw: Sequence[float],
    percentiles: Sequence[float] = QERROR_PERCENTILES,
    sentinel: Optional[float] = -1.0,
) -> dict:
    """Nearest-rank q-error percentiles in raw label space.  Rows whose true
    label equals the sentinel (the 'query returned nothing' marker) are
    excluded and counted."""
    if len(truths_raw) != len(predictions_raw):
        raise ValueError("truths and predictions must pair up")
    pairs = list(zip(truths_raw, predictions_raw))
    if sentinel is not None:
        kept = [(t, p) for t, p in pairs if t != sentinel]
    else:
        kept = pairs
    excluded = len(pairs) - len(kept)
    if not kept:
        raise ValueError("no rows left after sentinel exclusion")
    values = sorted(qerror(t, p) for t, p in kept)
    return {
        "count": len(values),
        "excluded_sentinel": excluded,
        "percentiles": {str(int(p)): nearest_rank_percentile(values, p) for p in percentiles},
        "max": values[-1],
    }


def regression_report(
    truths_transformed,
    predictions_transformed,
    truths_raw,
    predictions_raw,
    percentiles: Sequence[float] = QERROR_PERCENTILES,
) -> dict:
    zt = np.asarray(truths_transformed, dtype=np.float64)
    zp = np.asarray(predictions_transformed, dtype=np.float64)
    if zt.size == 0 or zt.shape != zp.shape:
        raise ValueError("need matching, non-empty prediction and truth arrays")
    huber, _ = huber_loss(zp, zt)
    mse = float(np.mean((zp - zt) ** 2))
    return {
        "count": int(zt.size),
        "huber": huber,
        "mse": mse,
        "qerror": qerror_table(list(truths_raw), list(predictions_raw), percentiles),
    }


def breakdown(
    group_keys: Sequence[str],
    truths,
    predictions,
    task_kind: str,
    min_group: int = MIN_GROUP_SIZE,
) -> dict:
    """Per-group metric table.  Classification groups report accuracy,
    regression groups report MSE (in whatever space the caller passed).
    Groups below min_group are kept but flagged low_confidence."""
    if not (len(group_keys) == len(truths) == len(predictions)):
        raise ValueError("group keys, truths and predictions must align")
    groups: dict[str, list[int]] = {}
    for i, key in enumerate(group_keys):
        groups.setdefault(str(key), []).append(i)

    out = {}
    for key in sorted(groups):
        idx = groups[key]
        row: dict = {"count": len(idx), "low_confidence": len(idx) < min_group}
        if task_kind == "classification":
            row["accuracy"] = sum(1 for i in idx if truths[i] == predictions[i]) / len(idx)
        elif task_kind == "regression":
            t = np.asarray([truths[i] for i in idx], dtype=np.float64)
            p = np.asarray([predictions[i] for i in idx], dtype=np.float64)
            row["mse"] = float(np.mean((p - t) ** 2))
        else:
            raise ValueError(f"unknown task kind: {task_kind!r}")
        out[key] = row
    return out


def log_buckets(values: Sequence[float], n_buckets: int = 5) -> list[str]:
    """Equal-width buckets in log space (shifted so the minimum lands at 0),
    rendered as half-open interval labels for breakdown grouping."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to bucket")
    lo = float(arr.min())
    shifted = np.log(arr - lo + 1.0)
    hi = float(shifted.max())
    if hi <= 0:
        return [f"[{lo:g},{lo:g}]"] * arr.size
    edges = np.linspace(0.0, hi, n_buckets + 1)
    idx = np.minimum(np.searchsorted(edges, shifted, side="right") - 1, n_buckets - 1)
    labels = []
    for i in idx:
        a = float(np.exp(edges[i]) - 1.0 + lo)
        b = float(np.exp(edges[i + 1]) - 1.0 + lo)
        labels.append(f"[{a:.6g},{b:.6g})")
    return labels
