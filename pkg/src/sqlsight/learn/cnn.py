"""Shallow text CNN: one convolution layer per window size with
max-over-time pooling.

For window size m the kernel scores every length-m slice of the embedded
sequence; ReLU then max pooling reduce each kernel to a single feature.
The pooled features from all window sizes are concatenated, passed through
(inverted) dropout at train time, and mapped to the outputs by one affine
layer.

Batches are padded to a common length, but pooling is masked to each
sequence's own valid positions, so the forward pass of a statement does
not depend on what else shares its batch.
"""

from __future__ import annotations

import numpy as np

INIT_SCALE = 0.05
MIN_SEQUENCE = 5  # shorter sequences are right-padded with PAD up to this


def pad_batch(
    token_ids: list[list[int]], pad_id: int = 0, min_len: int = MIN_SEQUENCE
) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length id sequences into a (B, T) array plus the
    per-row valid lengths (each at least min_len so every convolution
    window fits; recurrent models pass min_len=1)."""
    lengths = np.array([max(len(ids), min_len) for ids in token_ids], dtype=np.int64)
    width = int(lengths.max())
    out = np.full((len(token_ids), width), pad_id, dtype=np.int64)
    for row, ids in enumerate(token_ids):
        out[row, : len(ids)] = ids
    return out, lengths


class CnnModel:
    def __init__(
        self,
        vocab_size: int,
        n_outputs: int,
        embed_dim: int = 100,
        kernels_per_window: int = 100,
        windows: tuple[int, ...] = (3, 4, 5),
        dropout: float = 0.5,
        rng: np.random.Generator | None = None,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1): {dropout}")
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.kernels_per_window = kernels_per_window
        self.windows = tuple(windows)
        self.dropout = dropout
        self.n_outputs = n_outputs

        pooled = kernels_per_window * len(self.windows)
        self.params: dict[str, np.ndarray] = {
            "embedding": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, embed_dim)),
            "head_w": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs, pooled)),
            "head_b": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs,)),
        }
        for m in self.windows:
            self.params[f"conv_w_{m}"] = rng.uniform(
                -INIT_SCALE, INIT_SCALE, size=(kernels_per_window, m * embed_dim)
            )
            self.params[f"conv_b_{m}"] = rng.uniform(
                -INIT_SCALE, INIT_SCALE, size=(kernels_per_window,)
            )
        # padding embeds to nothing and stays that way
        self.params["embedding"][0] = 0.0

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(
        self,
        ids: np.ndarray,
        lengths: np.ndarray,
        train_mode: bool = False,
        dropout_rng: np.random.Generator | None = None,
    ):
        batch, width = ids.shape
        emb = self.params["embedding"][ids]  # (B, T, d)

        pooled_parts = []
        caches = {}
        for m in self.windows:
            n_pos = width - m + 1
            if n_pos < 1:
                raise ValueError(f"batch width {width} below window {m}")
            # (B, P, m*d) view of all length-m slices
            slices = np.lib.stride_tricks.sliding_window_view(emb, m, axis=1)
            slices = np.ascontiguousarray(np.moveaxis(slices, 3, 2)).reshape(
                batch, n_pos, m * self.embed_dim
            )
            scores = slices @ self.params[f"conv_w_{m}"].T + self.params[f"conv_b_{m}"]
            active = np.maximum(scores, 0.0)
            valid = (np.arange(n_pos)[None, :] < (lengths - m + 1)[:, None])  # (B, P)
            active = np.where(valid[:, :, None], active, -1.0)
            argmax = active.argmax(axis=1)  # (B, K)
            pooled = np.take_along_axis(active, argmax[:, None, :], axis=1)[:, 0, :]
            pooled_parts.append(pooled)
            caches[m] = {
                "slices": slices,
                "scores": scores,
                "valid": valid,
                "argmax": argmax,
                "n_pos": n_pos,
            }

        pooled_all = np.concatenate(pooled_parts, axis=1)  # (B, 3K)
        if train_mode and self.dropout > 0.0:
            if dropout_rng is None:
                raise ValueError("train_mode with dropout requires a dropout rng")
            keep = dropout_rng.random(pooled_all.shape) >= self.dropout
            dropped = pooled_all * keep / (1.0 - self.dropout)
        else:
            keep = None
            dropped = pooled_all
        out = dropped @ self.params["head_w"].T + self.params["head_b"]
        cache = {
            "ids": ids,
            "pooled_all": pooled_all,
            "dropped": dropped,
            "keep": keep,
            "per_window": caches,
            "shape": (batch, width),
        }
        return out, cache

    def backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        batch, width = cache["shape"]
        k = self.kernels_per_window
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}

        grads["head_w"] = d_out.T @ cache["dropped"]
        grads["head_b"] = d_out.sum(axis=0)
        d_dropped = d_out @ self.params["head_w"]
        if cache["keep"] is not None:
            d_pooled_all = d_dropped * cache["keep"] / (1.0 - self.dropout)
        else:
            d_pooled_all = d_dropped

        d_emb = np.zeros((batch, width, self.embed_dim))
        for w_idx, m in enumerate(self.windows):
            win = cache["per_window"][m]
            d_pooled = d_pooled_all[:, w_idx * k : (w_idx + 1) * k]  # (B, K)
            d_active = np.zeros((batch, win["n_pos"], k))
            np.put_along_axis(d_active, win["argmax"][:, None, :], d_pooled[:, None, :], axis=1)
            d_scores = d_active * (win["scores"] > 0.0) * win["valid"][:, :, None]
            grads[f"conv_w_{m}"] = np.einsum("bpk,bpx->kx", d_scores, win["slices"])
            grads[f"conv_b_{m}"] = d_scores.sum(axis=(0, 1))
            d_slices = d_scores @ self.params[f"conv_w_{m}"]  # (B, P, m*d)
            d_slices = d_slices.reshape(batch, win["n_pos"], m, self.embed_dim)
            for offset in range(m):
                d_emb[:, offset : offset + win["n_pos"], :] += d_slices[:, :, offset, :]

        flat_ids = cache["ids"].reshape(-1)
        np.add.at(grads["embedding"], flat_ids, d_emb.reshape(-1, self.embed_dim))
        grads["embedding"][0] = 0.0  # padding row is frozen
        return grads
