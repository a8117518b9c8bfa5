"""Linear models over TFIDF vectors.

One weight row per output: softmax regression for classification, a single
Huber-trained row for regression.  Inputs arrive sparse and are densified
per mini-batch, which keeps memory bounded by batch_size * vocab_size.
"""

from __future__ import annotations

import numpy as np

from sqlsight.features import SparseVector

INIT_SCALE = 0.05


def densify(batch: list[SparseVector]) -> np.ndarray:
    if not batch:
        raise ValueError("empty batch")
    x = np.zeros((len(batch), batch[0].size), dtype=np.float64)
    for row, vec in enumerate(batch):
        if vec.indices:
            x[row, vec.indices] = vec.values
    return x


class LinearModel:
    def __init__(self, n_features: int, n_outputs: int, rng: np.random.Generator):
        self.n_features = n_features
        self.n_outputs = n_outputs
        self.params = {
            "w": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs, n_features)),
            "b": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs,)),
        }

    def forward(self, x: np.ndarray):
        out = x @ self.params["w"].T + self.params["b"]
        return out, {"x": x}

    def backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        d_out = np.atleast_2d(d_out)
        return {
            "w": d_out.T @ cache["x"],
            "b": d_out.sum(axis=0),
        }

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())
