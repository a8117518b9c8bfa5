"""The three non-learned reference predictors.

mfreq   - most frequent training class, for classification tasks
median  - median training label in transform space, for regression tasks
opt     - a straight line from the optimizer's cost estimate to the
          transformed label, the classic "trust the planner" baseline
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sqlsight.learn.transforms import LabelTransform, fit_label_transform


@dataclass
class MfreqModel:
    classes: list[str]
    shares: list[float]
    predicted_class: str


@dataclass
class MedianModel:
    transform: LabelTransform
    constant_transformed: float

    def predict_raw(self) -> float:
        return float(self.transform.invert(self.constant_transformed))


@dataclass
class OptCostModel:
    transform: LabelTransform
    slope: float
    intercept: float

    def predict_transformed(self, cost_estimate: float) -> float:
        return self.slope * float(cost_estimate) + self.intercept


def baseline_mfreq(labels: list[str]) -> MfreqModel:
    """Predict the modal training class; a tie goes to the lexicographically
    smaller class name so the result is reproducible."""
    if not labels:
        raise ValueError("mfreq needs at least one labeled example")
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    classes = sorted(counts)
    total = len(labels)
    best = max(counts.values())
    predicted = min(c for c in classes if counts[c] == best)
    return MfreqModel(
        classes=classes,
        shares=[counts[c] / total for c in classes],
        predicted_class=predicted,
    )


def baseline_median(values: list[float]) -> MedianModel:
    """Constant predictor: the median of the transformed training labels."""
    if not values:
        raise ValueError("median baseline needs at least one labeled example")
    transform = fit_label_transform(values)
    z = np.sort(transform.apply(np.asarray(values, dtype=np.float64)))
    n = z.size
    mid = n // 2
    constant = float(z[mid]) if n % 2 else float((z[mid - 1] + z[mid]) / 2.0)
    return MedianModel(transform=transform, constant_transformed=constant)


def fit_opt_baseline(cost_estimates: list[float], values: list[float]) -> OptCostModel:
    """Least-squares line from planner cost to the transformed label."""
    if len(cost_estimates) != len(values):
        raise ValueError("cost estimates and labels must pair up")
    if len(values) < 2:
        raise ValueError("opt baseline needs at least two labeled examples")
    x = np.asarray(cost_estimates, dtype=np.float64)
    if np.unique(x).size < 2:
        raise ValueError("opt baseline needs at least two distinct cost estimates")
    transform = fit_label_transform(values)
    z = transform.apply(np.asarray(values, dtype=np.float64))
    xm, zm = x.mean(), z.mean()
    slope = float(((x - xm) @ (z - zm)) / ((x - xm) @ (x - xm)))
    intercept = float(zm - slope * xm)
    return OptCostModel(transform=transform, slope=slope, intercept=intercept)
