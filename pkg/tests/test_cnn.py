"""Convolutional text model: worked examples and finite-difference checks."""

import time

import numpy as np
import pytest

from sqlsight.learn.cnn import CnnModel, pad_batch
from sqlsight.learn.transforms import cross_entropy, huber_loss

REL_TOL = 1e-3
FD_STEP = 1e-4


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def tiny_model(seed=0, n_outputs=1, vocab=11, dropout=0.0):
    rng = np.random.default_rng(seed)
    return CnnModel(
        vocab_size=vocab,
        n_outputs=n_outputs,
        embed_dim=2,
        kernels_per_window=1,
        windows=(3, 4, 5),
        dropout=dropout,
        rng=rng,
    )


# --- shape and padding behaviour ------------------------------------------------

def test_pad_batch_pads_to_longest_and_window_minimum():
    ids, lengths = pad_batch([[5, 6], [7, 8, 9, 10, 11, 12]], pad_id=0)
    assert ids.shape == (2, 6)
    assert list(ids[0]) == [5, 6, 0, 0, 0, 0]
    # a 2-token statement still reports the window minimum as its length floor
    assert lengths[0] == 5 and lengths[1] == 6


def test_short_sequence_is_padded_to_widest_window():
    model = tiny_model()
    ids, lengths = pad_batch([[1, 2]])
    out, _ = model.forward(ids, lengths)
    assert out.shape == (1, 1)
    assert np.isfinite(out).all()


def test_forward_ignores_trailing_padding():
    """Appending PAD to a statement must not change the model output."""
    model = tiny_model(seed=3)
    ids_a, len_a = pad_batch([[4, 5, 6, 7, 8, 9]])
    ids_b = np.concatenate([ids_a, np.zeros((1, 7), dtype=ids_a.dtype)], axis=1)
    out_a, _ = model.forward(ids_a, len_a)
    out_b, _ = model.forward(ids_b, len_a)
    assert np.allclose(out_a, out_b, atol=0)


def test_batch_composition_does_not_change_predictions():
    model = tiny_model(seed=4)
    seqs = [[1, 2, 3, 4, 5, 6, 7], [8, 9, 10], [2, 2, 2, 2, 2, 2, 2, 2, 2]]
    ids, lengths = pad_batch(seqs)
    batched, _ = model.forward(ids, lengths)
    for i, seq in enumerate(seqs):
        ids_i, len_i = pad_batch([seq])
        single, _ = model.forward(ids_i, len_i)
        assert np.allclose(batched[i], single[0], atol=1e-12)


# --- one-dimensional convolution worked example ---------------------------------

def test_convolution_worked_example():
    """Kernel (1,-1) over (1,2,3,4) slides to (-1,-1,-1); ReLU kills it and
    max pooling over a (2,-1) response keeps the 2."""
    model = CnnModel(
        vocab_size=6, n_outputs=1, embed_dim=1, kernels_per_window=1,
        windows=(2,), dropout=0.0, rng=np.random.default_rng(0),
    )
    # embedding: token i -> value i (1..4); kernel w=(1,-1), b=0
    model.params["embedding"][:, 0] = [0, 1, 2, 3, 4, 0]
    model.params["conv_w_2"][0] = [1.0, -1.0]
    model.params["conv_b_2"][0] = 0.0
    model.params["head_w"][:] = 1.0
    model.params["head_b"][:] = 0.0

    ids = np.array([[1, 2, 3, 4]])
    lengths = np.array([4])
    out, cache = model.forward(ids, lengths)
    # raw responses: 1-2, 2-3, 3-4 = (-1,-1,-1); ReLU -> 0; head -> 0
    assert out[0, 0] == 0.0

    model.params["conv_w_2"][0] = [-1.0, 1.0]  # responses (1,1,1) -> max 1
    out, _ = model.forward(ids, lengths)
    assert out[0, 0] == 1.0


def test_max_over_time_picks_single_position():
    model = CnnModel(
        vocab_size=5, n_outputs=1, embed_dim=1, kernels_per_window=1,
        windows=(2,), dropout=0.0, rng=np.random.default_rng(1),
    )
    model.params["embedding"][:, 0] = [0, 1, 5, 1, 1]
    model.params["conv_w_2"][0] = [1.0, 1.0]
    model.params["conv_b_2"][0] = 0.0
    model.params["head_w"][:] = 1.0
    model.params["head_b"][:] = 0.0
    ids, lengths = pad_batch([[1, 2, 3, 4]])
    out, _ = model.forward(ids, lengths)
    assert out[0, 0] == 6.0  # windows: 1+5, 5+1, 1+1 -> 6


# --- gradients -------------------------------------------------------------------

def loss_for_params(model, ids, lengths, targets, kind):
    out, _ = model.forward(ids, lengths)
    if kind == "huber":
        loss, _ = huber_loss(out[:, 0], targets)
    else:
        loss, _ = cross_entropy(out, targets)
    return loss


def analytic_grads(model, ids, lengths, targets, kind):
    out, cache = model.forward(ids, lengths)
    if kind == "huber":
        _, d = huber_loss(out[:, 0], targets)
        d_out = d[:, None]
    else:
        _, d_out = cross_entropy(out, targets)
    return model.backward(cache, d_out)


@pytest.mark.parametrize("kind", ["huber", "ce"])
def test_gradients_match_central_differences(kind):
    model = tiny_model(seed=7, n_outputs=1 if kind == "huber" else 3)
    # lift the convolution biases so most ReLU units are active and the
    # finite-difference probe exercises nearly every parameter
    for m in (3, 4, 5):
        model.params[f"conv_b_{m}"] += 0.5
    rng = np.random.default_rng(42)
    seqs = [list(rng.integers(1, 11, size=n)) for n in (6, 9, 12, 5, 8, 10)]
    ids, lengths = pad_batch(seqs)
    n = len(seqs)
    if kind == "huber":
        targets = rng.normal(size=n)
    else:
        targets = rng.integers(0, 3, size=n)

    grads = analytic_grads(model, ids, lengths, targets, kind)
    checked = worst = 0
    for name, g in grads.items():
        p = model.params[name]
        flat_g = g.ravel()
        flat_p = p.ravel()
        for idx in range(flat_p.size):
            if name == "embedding" and idx < model.params["embedding"].shape[1]:
                continue  # padding row is pinned at zero
            orig = flat_p[idx]
            flat_p[idx] = orig + FD_STEP
            up = loss_for_params(model, ids, lengths, targets, kind)
            flat_p[idx] = orig - FD_STEP
            down = loss_for_params(model, ids, lengths, targets, kind)
            flat_p[idx] = orig
            fd = (up - down) / (2 * FD_STEP)
            if abs(fd) < 1e-10 and abs(flat_g[idx]) < 1e-10:
                continue
            err = relative_error(flat_g[idx], fd)
            worst = max(worst, err)
            checked += 1
            assert err < REL_TOL, (name, idx, flat_g[idx], fd)
    assert checked > 50


def test_padding_row_gradient_is_zero():
    model = tiny_model(seed=9)
    ids, lengths = pad_batch([[3, 4, 5], [6, 7, 8, 9, 2, 1, 3, 4]])
    grads = analytic_grads(model, ids, lengths, np.array([1.0, -1.0]), "huber")
    assert np.all(grads["embedding"][0] == 0.0)


def test_dropout_scales_kept_units():
    model = tiny_model(seed=11, dropout=0.5)
    ids, lengths = pad_batch([[1, 2, 3, 4, 5, 6]])
    # eval mode: deterministic, no scaling
    out_eval1, _ = model.forward(ids, lengths)
    out_eval2, _ = model.forward(ids, lengths)
    assert np.allclose(out_eval1[0], out_eval2[0])


def test_dropout_train_mode_masks_features():
    model = tiny_model(seed=13, dropout=0.5)
    ids, lengths = pad_batch([[1, 2, 3, 4, 5, 6, 7]])
    seen_different = False
    base, _ = model.forward(ids, lengths)
    for trial in range(20):
        out, cache = model.forward(
            ids, lengths, train_mode=True,
            dropout_rng=np.random.default_rng(trial),
        )
        if not np.allclose(out, base):
            seen_different = True
    assert seen_different


def test_gradient_suite_is_fast_enough():
    start = time.monotonic()
    test_gradients_match_central_differences("huber")
    assert time.monotonic() - start < 30.0
