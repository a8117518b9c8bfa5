"""Evaluation metrics: classification report, qerror tables, breakdowns."""

import math

import pytest

from sqlsight import metrics
from sqlsight.metrics import (
    classification_report,
    log_buckets,
    nearest_rank_percentile,
    qerror,
    qerror_table,
    regression_report,
)


# --- qerror ------------------------------------------------------------------

def test_qerror_reference_value():
    assert qerror(8.0, 2.0) == 4.0
    assert qerror(2.0, 8.0) == 4.0


def test_qerror_perfect_is_one():
    assert qerror(5.0, 5.0) == 1.0


def test_qerror_clamps_below_one():
    # both sides clamp to 1, so tiny values cannot blow the ratio up
    assert qerror(0.0, 0.0) == 1.0
    assert qerror(0.5, 0.25) == 1.0
    assert qerror(0.0, 3.0) == 3.0


def test_nearest_rank_percentile():
    values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    assert nearest_rank_percentile(values, 50) == 5.0  # rank ceil(0.5*10)=5
    assert nearest_rank_percentile(values, 95) == 10.0
    assert nearest_rank_percentile(values, 100) == 10.0
    assert nearest_rank_percentile([42.0], 50) == 42.0


def test_qerror_table_percentiles_and_max():
    truths = [float(2 ** k) for k in range(10)]  # 1..512
    preds = [1.0] * 10
    table = qerror_table(truths, preds, percentiles=(50, 90))
    assert table["count"] == 10
    assert table["max"] == 512.0
    assert table["percentiles"]["50"] == 16.0   # qerrors 1,2,4,...,512; rank 5
    assert table["percentiles"]["90"] == 256.0  # rank 9


def test_qerror_table_excludes_sentinel_truths():
    truths = [-1.0, 4.0, -1.0, 8.0]
    preds = [9.0, 4.0, 9.0, 2.0]
    table = qerror_table(truths, preds, percentiles=(50,))
    assert table["count"] == 2
    assert table["excluded_sentinel"] == 2
    assert table["max"] == 4.0


# --- classification report -------------------------------------------------------

def test_report_counts_and_accuracy():
    rep = classification_report(
        ["a", "a", "b", "b"], ["a", "b", "b", "b"],
    )
    assert rep["count"] == 4
    assert abs(rep["accuracy"] - 0.75) < 1e-12
    assert rep["confusion"]["a"]["b"] == 1


def test_per_class_f1_worked_example():
    truths = ["a", "a", "a", "b"]
    preds = ["a", "a", "b", "b"]
    rep = classification_report(truths, preds)
    pa = rep["per_class"]["a"]
    # precision 2/2, recall 2/3 -> F = 2*1*(2/3)/(1+2/3) = 0.8
    assert abs(pa["precision"] - 1.0) < 1e-12
    assert abs(pa["recall"] - 2 / 3) < 1e-12
    assert abs(pa["f1"] - 0.8) < 1e-12


def test_f1_is_zero_when_class_never_predicted():
    rep = classification_report(["a", "b", "b"], ["b", "b", "b"])
    assert rep["per_class"]["a"]["f1"] == 0.0
    assert rep["per_class"]["a"]["precision"] == 0.0
    assert rep["per_class"]["a"]["recall"] == 0.0


def test_report_includes_predicted_only_classes():
    rep = classification_report(["a", "a"], ["a", "c"])
    assert "c" in rep["classes"]
    assert rep["per_class"]["c"]["support"] == 0


def test_cross_entropy_from_distributions():
    dists = [{"a": 0.5, "b": 0.5}, {"a": 0.25, "b": 0.75}]
    rep = classification_report(["a", "b"], ["a", "b"], dists)
    expected = -(math.log(0.5) + math.log(0.75)) / 2
    assert abs(rep["cross_entropy"] - expected) < 1e-12


def test_cross_entropy_clamps_zero_probability():
    dists = [{"a": 0.0, "b": 1.0}]
    rep = classification_report(["a"], ["b"], dists)
    assert rep["cross_entropy"] == pytest.approx(-math.log(1e-12))


# --- regression report -------------------------------------------------------------

def test_regression_report_fields():
    rep = regression_report(
        truths_transformed=[0.0, 1.0, 2.0],
        predictions_transformed=[0.0, 1.5, 1.0],
        truths_raw=[0.0, math.e - 1, math.e ** 2 - 1],
        predictions_raw=[0.0, math.e ** 1.5 - 1, math.e - 1],
    )
    assert rep["count"] == 3
    assert abs(rep["mse"] - (0 + 0.25 + 1.0) / 3) < 1e-12
    assert rep["qerror"]["count"] == 3
    assert rep["huber"] >= 0


# --- grouped breakdowns --------------------------------------------------------------

def test_breakdown_flags_small_groups():
    keys = ["big"] * 12 + ["small"] * 3
    truths = ["x"] * 15
    preds = ["x"] * 12 + ["y"] * 3
    table = metrics.breakdown(keys, truths, preds, "classification")
    assert table["big"]["low_confidence"] is False
    assert table["small"]["low_confidence"] is True
    assert table["big"]["accuracy"] == 1.0
    assert table["small"]["accuracy"] == 0.0


def test_breakdown_regression_uses_mse():
    keys = ["g"] * 10
    truths = [1.0] * 10
    preds = [2.0] * 10
    table = metrics.breakdown(keys, truths, preds, "regression")
    assert abs(table["g"]["mse"] - 1.0) < 1e-12


def test_log_buckets_monotone_labels():
    values = [0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0]
    labels = log_buckets(values)
    assert len(labels) == len(values)
    assert labels[0] != labels[-1]
    # bucket labels sort with their values
    assert sorted(set(labels)) == sorted(set(labels), key=str)


def test_log_buckets_constant_input():
    labels = log_buckets([5.0, 5.0, 5.0])
    assert len(set(labels)) == 1
