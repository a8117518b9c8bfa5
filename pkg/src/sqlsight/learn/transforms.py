"""Label transforms, losses, and gradient clipping.

Numeric labels (CPU seconds, answer rows) are heavy-tailed over many orders
of magnitude, so regression happens in a shifted log space anchored at the
training minimum:

    z = ln(y + 1 - y_min)        y = e^z - 1 + y_min

which maps the smallest training label to exactly 0 and tolerates the -1
sentinel used for "no answer".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HUBER_DELTA = 1.0


@dataclass
class LabelTransform:
    y_min: float

    def apply(self, y):
        arr = np.asarray(y, dtype=np.float64)
        if np.any(arr < self.y_min - 1e-12):
            raise ValueError(
                f"label below the transform domain (min {self.y_min}): {float(np.min(arr))}"
            )
        return np.log(np.maximum(arr - self.y_min, 0.0) + 1.0)

    def invert(self, z):
        arr = np.asarray(z, dtype=np.float64)
        return np.exp(arr) - 1.0 + self.y_min


def fit_label_transform(values) -> LabelTransform:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot fit a label transform on no labels")
    return LabelTransform(y_min=float(arr.min()))


def huber_loss(pred, truth, delta: float = HUBER_DELTA):
    """Mean Huber loss and its gradient w.r.t. pred.

    Quadratic within +-delta of the truth, linear outside: 0.5*r^2 for
    |r| <= delta, else delta*(|r| - 0.5*delta).  With delta=1 that is the
    familiar |r| - 0.5 tail.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    r = pred - truth
    absr = np.abs(r)
    quad = absr <= delta
    per = np.where(quad, 0.5 * r * r, delta * (absr - 0.5 * delta))
    grad = np.where(quad, r, delta * np.sign(r)) / r.size
    return float(per.mean()), grad


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, true_idx):
    """Mean negative log-likelihood over a batch of logit rows, plus the
    gradient w.r.t. the logits (softmax minus one-hot, averaged)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    idx = np.asarray(true_idx, dtype=np.int64).reshape(-1)
    if idx.shape[0] != logits.shape[0]:
        raise ValueError("one true class index per logit row required")
    probs = softmax(logits)
    m = logits.shape[0]
    picked = np.clip(probs[np.arange(m), idx], 1e-12, None)
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(m), idx] -= 1.0
    return loss, grad / m


def clip_gradient_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most
    max_norm.  A max_norm of 0 disables clipping.  Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
