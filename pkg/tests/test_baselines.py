"""Constant-majority, constant-median, and planner-cost baselines."""

import math
import statistics

import numpy as np
import pytest

from sqlsight.learn.baselines import (
    baseline_median,
    baseline_mfreq,
    fit_opt_baseline,
)


def test_mfreq_picks_majority_class():
    model = baseline_mfreq(["success"] * 5 + ["severe"])
    assert model.predicted_class == "success"
    share = model.shares[model.classes.index("success")]
    assert abs(share - 5 / 6) < 1e-12


def test_mfreq_tie_breaks_to_lexicographically_smaller():
    model = baseline_mfreq(["b", "a", "a", "b"])
    assert model.predicted_class == "a"


def test_mfreq_shares_sum_to_one():
    model = baseline_mfreq(["x", "y", "y", "z"])
    assert abs(sum(model.shares) - 1.0) < 1e-12
    assert model.classes == ["x", "y", "z"]


def test_mfreq_rejects_empty():
    with pytest.raises(ValueError):
        baseline_mfreq([])


def test_median_constant_is_median_of_transformed_labels():
    values = [0.0, 1.0, 1.0, 7.0, 100.0]
    model = baseline_median(values)
    z = [model.transform.apply(v) for v in values]
    assert abs(model.constant_transformed - statistics.median(z)) < 1e-12


def test_median_even_count_averages_middle_pair():
    values = [0.0, 0.0, 3.0, 9.0]
    model = baseline_median(values)
    z = sorted(model.transform.apply(v) for v in values)
    assert abs(model.constant_transformed - (z[1] + z[2]) / 2) < 1e-12


def test_median_prediction_inverts_to_raw_scale():
    values = [2.0, 5.0, 11.0]
    model = baseline_median(values)
    raw = model.predict_raw()
    assert abs(model.transform.apply(raw) - model.constant_transformed) < 1e-9


def test_median_on_survey_shaped_labels():
    # minimum -1 (unrecorded answer count), median 1 -> constant ln(3)
    values = [-1.0] + [1.0] * 5 + [50.0, 2000.0, 3.0]
    model = baseline_median(values)
    assert abs(model.constant_transformed - math.log(3.0)) < 1e-12


def test_opt_baseline_is_least_squares_in_transformed_space():
    rng = np.random.default_rng(3)
    costs = list(rng.uniform(0.0, 50.0, size=40))
    values = [max(0.0, 0.3 * c + rng.normal() * 2) for c in costs]
    model = fit_opt_baseline(costs, values)

    z = np.array([model.transform.apply(v) for v in values])
    x = np.array(costs)
    slope, intercept = model.slope, model.intercept

    def sse(a, b):
        return float(((a * x + b - z) ** 2).sum())

    base = sse(slope, intercept)
    for da, db in ((1e-4, 0), (-1e-4, 0), (0, 1e-4), (0, -1e-4), (1e-4, -1e-4)):
        assert sse(slope + da, intercept + db) >= base - 1e-9


def test_opt_baseline_exact_on_noiseless_line():
    costs = [0.0, 1.0, 2.0, 3.0]
    model_t = fit_opt_baseline(costs, [0.0, 0.0, 0.0, 0.0])
    assert abs(model_t.slope) < 1e-12

    # labels chosen so transformed = 2*cost exactly: y = e^(2c) - 1, min 0
    values = [math.exp(2 * c) - 1 for c in costs]
    model = fit_opt_baseline(costs, values)
    assert abs(model.slope - 2.0) < 1e-9
    assert abs(model.intercept) < 1e-8
    assert abs(model.predict_transformed(2.5) - 5.0) < 1e-8


def test_opt_baseline_needs_two_distinct_costs():
    with pytest.raises(ValueError):
        fit_opt_baseline([3.0, 3.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_opt_baseline([1.0], [1.0])
