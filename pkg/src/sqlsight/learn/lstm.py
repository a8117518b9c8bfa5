"""Stacked LSTM over token embeddings.

Per layer and time step, with x the layer input and h/c the recurrent
state:

    cand   = tanh(W_c x + U_c h + b_c)
    update = sigmoid(W_u x + U_u h + b_u)
    forget = sigmoid(W_f x + U_f h + b_f)
    out    = sigmoid(W_o x + U_o h + b_o)
    c      = update * cand + forget * c_prev
    h      = out * tanh(c)

Layer l's hidden sequence is layer l+1's input; the prediction head reads
the top layer's hidden state at each sequence's final step.  Padded steps
carry h and c through unchanged, so batch packing cannot change what an
individual statement produces.
"""

from __future__ import annotations

import numpy as np

INIT_SCALE = 0.05

_GATES = ("c", "u", "f", "o")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LstmModel:
    def __init__(
        self,
        vocab_size: int,
        n_outputs: int,
        embed_dim: int = 100,
        hidden_size: int = 150,
        layers: int = 3,
        rng: np.random.Generator | None = None,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden_size = hidden_size
        self.layers = layers
        self.n_outputs = n_outputs

        h = hidden_size
        self.params: dict[str, np.ndarray] = {
            "embedding": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, embed_dim)),
        }
        for layer in range(layers):
            in_dim = embed_dim if layer == 0 else h
            for gate in _GATES:
                self.params[f"w_{gate}_{layer}"] = rng.uniform(
                    -INIT_SCALE, INIT_SCALE, size=(h, in_dim)
                )
                self.params[f"u_{gate}_{layer}"] = rng.uniform(
                    -INIT_SCALE, INIT_SCALE, size=(h, h)
                )
                self.params[f"b_{gate}_{layer}"] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(h,))
        self.params["head_w"] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs, h))
        self.params["head_b"] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_outputs,))
        self.params["embedding"][0] = 0.0  # padding row, frozen

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def _fused(self, layer: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.concatenate([self.params[f"w_{g}_{layer}"] for g in _GATES], axis=0)
        u = np.concatenate([self.params[f"u_{g}_{layer}"] for g in _GATES], axis=0)
        b = np.concatenate([self.params[f"b_{g}_{layer}"] for g in _GATES], axis=0)
        return w, u, b

    def forward(self, ids: np.ndarray, lengths: np.ndarray, train_mode: bool = False,
                dropout_rng: np.random.Generator | None = None):
        batch, width = ids.shape
        h = self.hidden_size
        emb = self.params["embedding"][ids]  # (B, T, d)
        alive = np.arange(width)[None, :] < lengths[:, None]  # (B, T)

        layer_caches = []
        x_seq = emb
        for layer in range(self.layers):
            w, u, b = self._fused(layer)
            h_prev = np.zeros((batch, h))
            c_prev = np.zeros((batch, h))
            steps = []
            h_seq = np.zeros((batch, width, h))
            for t in range(width):
                x_t = x_seq[:, t, :]
                z = x_t @ w.T + h_prev @ u.T + b
                cand = np.tanh(z[:, :h])
                upd = _sigmoid(z[:, h : 2 * h])
                fgt = _sigmoid(z[:, 2 * h : 3 * h])
                out = _sigmoid(z[:, 3 * h :])
                c_new = upd * cand + fgt * c_prev
                tanh_c = np.tanh(c_new)
                h_new = out * tanh_c
                mask = alive[:, t : t + 1]
                h_t = np.where(mask, h_new, h_prev)
                c_t = np.where(mask, c_new, c_prev)
                steps.append(
                    {
                        "x": x_t, "h_prev": h_prev, "c_prev": c_prev,
                        "cand": cand, "upd": upd, "fgt": fgt, "out": out,
                        "tanh_c": tanh_c, "mask": mask,
                    }
                )
                h_seq[:, t, :] = h_t
                h_prev, c_prev = h_t, c_t
            layer_caches.append({"steps": steps, "x_seq": x_seq})
            x_seq = h_seq

        final_h = x_seq[:, -1, :]  # carried forward to each row's last step
        logits = final_h @ self.params["head_w"].T + self.params["head_b"]
        cache = {
            "ids": ids,
            "layer_caches": layer_caches,
            "final_h": final_h,
            "shape": (batch, width),
        }
        return logits, cache

    def backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        batch, width = cache["shape"]
        h = self.hidden_size
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}

        grads["head_w"] = d_out.T @ cache["final_h"]
        grads["head_b"] = d_out.sum(axis=0)

        # gradient w.r.t. each layer's full hidden sequence; only the last
        # position of the top layer receives the head's gradient
        d_hseq = np.zeros((batch, width, h))
        d_hseq[:, -1, :] = d_out @ self.params["head_w"]

        for layer in range(self.layers - 1, -1, -1):
            lc = cache["layer_caches"][layer]
            w, u, _ = self._fused(layer)
            in_dim = w.shape[1]
            dw = np.zeros_like(w)
            du = np.zeros_like(u)
            db = np.zeros(4 * h)
            d_xseq = np.zeros((batch, width, in_dim))

            d_h = np.zeros((batch, h))
            d_c = np.zeros((batch, h))
            for t in range(width - 1, -1, -1):
                step = lc["steps"][t]
                d_h = d_h + d_hseq[:, t, :]
                mask = step["mask"]

                # dead steps pass state straight through
                d_h_live = np.where(mask, d_h, 0.0)
                d_c_live = np.where(mask, d_c, 0.0)
                d_h_carry = np.where(mask, 0.0, d_h)
                d_c_carry = np.where(mask, 0.0, d_c)

                d_out_gate = d_h_live * step["tanh_c"]
                d_c_total = d_c_live + d_h_live * step["out"] * (1.0 - step["tanh_c"] ** 2)
                d_cand = d_c_total * step["upd"]
                d_upd = d_c_total * step["cand"]
                d_fgt = d_c_total * step["c_prev"]

                dz = np.concatenate(
                    [
                        d_cand * (1.0 - step["cand"] ** 2),
                        d_upd * step["upd"] * (1.0 - step["upd"]),
                        d_fgt * step["fgt"] * (1.0 - step["fgt"]),
                        d_out_gate * step["out"] * (1.0 - step["out"]),
                    ],
                    axis=1,
                )  # (B, 4h)

                dw += dz.T @ step["x"]
                du += dz.T @ step["h_prev"]
                db += dz.sum(axis=0)
                d_xseq[:, t, :] = dz @ w

                d_h = d_h_carry + dz @ u
                d_c = d_c_carry + d_c_total * step["fgt"]

            for g_idx, gate in enumerate(_GATES):
                grads[f"w_{gate}_{layer}"] = dw[g_idx * h : (g_idx + 1) * h]
                grads[f"u_{gate}_{layer}"] = du[g_idx * h : (g_idx + 1) * h]
                grads[f"b_{gate}_{layer}"] = db[g_idx * h : (g_idx + 1) * h]
            d_hseq = d_xseq  # becomes the hidden-sequence gradient of the layer below

        flat_ids = cache["ids"].reshape(-1)
        np.add.at(grads["embedding"], flat_ids, d_hseq.reshape(-1, self.embed_dim))
        grads["embedding"][0] = 0.0
        return grads
