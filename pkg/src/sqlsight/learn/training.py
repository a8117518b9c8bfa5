"""Training orchestration: data extraction, the epoch loop, early stopping.

`train` is the single entry point used by the CLI: it takes a model kind,
a split dataset and a task, builds whatever vocabulary/features the kind
needs from the training part only, optimizes, and returns a self-contained
model bundle plus a training log.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from sqlsight import features as feat
from sqlsight import sqltext
from sqlsight.learn import bundle as bundle_mod
from sqlsight.learn.baselines import baseline_mfreq, baseline_median, fit_opt_baseline
from sqlsight.learn.cnn import CnnModel, pad_batch
from sqlsight.learn.linear import LinearModel, densify
from sqlsight.learn.lstm import LstmModel
from sqlsight.learn.optim import AdaMax
from sqlsight.learn.transforms import (
    clip_gradient_norm,
    cross_entropy,
    fit_label_transform,
    huber_loss,
)
from sqlsight.workload import DatasetSplit, task_label, task_type

MODEL_KINDS = (
    "mfreq",
    "median",
    "opt",
    "ctfidf",
    "wtfidf",
    "ccnn",
    "wcnn",
    "clstm",
    "wlstm",
)

DEFAULT_MAX_LEN = {"char": 2048, "word": 512}
DEFAULT_TOKEN_VOCAB = {"char": 1000, "word": 50000}


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 0.25  # global L2; 0 disables clipping
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    max_len: Optional[int] = None  # per-granularity default when None

    def to_dict(self) -> dict:
        return asdict(self)


def granularity_of(kind: str) -> Optional[str]:
    if kind in ("ctfidf", "ccnn", "clstm"):
        return "char"
    if kind in ("wtfidf", "wcnn", "wlstm"):
        return "word"
    return None


def default_hyperparameters(kind: str) -> dict:
    gran = granularity_of(kind)
    if kind in ("mfreq", "median", "opt"):
        return {}
    if kind in ("ctfidf", "wtfidf"):
        return {"vocab_size": feat.DEFAULT_TFIDF_VOCAB[gran]}
    if kind in ("ccnn", "wcnn"):
        return {
            "vocab_size": DEFAULT_TOKEN_VOCAB[gran],
            "embed_dim": 100,
            "kernels_per_window": 100,
            "windows": [3, 4, 5],
            "dropout": 0.5,
        }
    if kind in ("clstm", "wlstm"):
        return {
            "vocab_size": DEFAULT_TOKEN_VOCAB[gran],
            "embed_dim": 100,
            "hidden_size": 150,
            "layers": 3,
        }
    raise ValueError(f"unknown model kind: {kind!r}")


@dataclass
class _TaskData:
    statements: list[str]
    labels: list


def _extract(split: DatasetSplit, part: str, task: str) -> _TaskData:
    statements, labels = [], []
    for q in split.part(part):
        label = task_label(q, task)
        if label is None:
            continue
        statements.append(q.statement)
        labels.append(label)
    return _TaskData(statements=statements, labels=labels)


def _snapshot(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def _optimize(
    params: dict[str, np.ndarray],
    train_step: Callable[[np.ndarray, np.random.Generator], tuple[float, dict]],
    validation_loss: Callable[[], float],
    n_train: int,
    config: TrainConfig,
) -> dict:
    """Generic mini-batch loop with AdaMax and early stopping.

    Validation is checked once per epoch; a strictly lower loss counts as
    improvement (a tie keeps the earlier epoch's parameters), and training
    stops after `patience` epochs without one.
    """
    rng = np.random.default_rng(config.seed)
    opt = AdaMax(params, config.learning_rate, config.beta1, config.beta2)
    best_loss = math.inf
    best_epoch = 0
    best_params = _snapshot(params)
    stale = 0
    epochs = []

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train)
        running = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = train_step(idx, rng)
            if config.clip_norm > 0:
                clip_gradient_norm(grads, config.clip_norm)
            opt.step(grads)
            running += loss * len(idx)
        val_loss = validation_loss()
        improved = val_loss < best_loss
        if improved:
            best_loss = val_loss
            best_epoch = epoch
            best_params = _snapshot(params)
            stale = 0
        else:
            stale += 1
        epochs.append(
            {
                "epoch": epoch,
                "train_loss": running / n_train,
                "validation_loss": val_loss,
                "improved": improved,
            }
        )
        if stale >= config.patience:
            break

    for key, value in best_params.items():
        params[key][...] = value
    return {
        "epochs": epochs,
        "best_epoch": best_epoch,
        "best_validation_loss": best_loss,
    }


def _make_loss(is_classification: bool):
    if is_classification:
        def loss_fn(outputs, y):
            return cross_entropy(outputs, y)
    else:
        def loss_fn(outputs, y):
            loss, d_pred = huber_loss(outputs[:, 0], y)
            return loss, d_pred[:, None]
    return loss_fn


def fit_linear(
    train_x: list[feat.SparseVector],
    train_y: np.ndarray,
    val_x: list[feat.SparseVector],
    val_y: np.ndarray,
    n_outputs: int,
    is_classification: bool,
    config: TrainConfig,
) -> tuple[LinearModel, dict]:
    """Mini-batch AdaMax over TFIDF vectors; softmax/CE for classification,
    Huber for regression."""
    if not train_x or not val_x:
        raise ValueError("training and validation parts must both be non-empty")
    model = LinearModel(train_x[0].size, n_outputs, np.random.default_rng(config.seed))
    loss_fn = _make_loss(is_classification)

    def train_step(idx, _rng):
        x = densify([train_x[i] for i in idx])
        out, cache = model.forward(x)
        loss, d_out = loss_fn(out, train_y[idx])
        return loss, model.backward(cache, d_out)

    def validation_loss():
        total = 0.0
        for start in range(0, len(val_x), 256):
            chunk = val_x[start : start + 256]
            out, _ = model.forward(densify(chunk))
            loss, _ = loss_fn(out, val_y[start : start + len(chunk)])
            total += loss * len(chunk)
        return total / len(val_x)

    log = _optimize(model.params, train_step, validation_loss, len(train_x), config)
    return model, log


def _fit_sequence_model(
    model,
    enc_train: list[list[int]],
    train_y: np.ndarray,
    enc_val: list[list[int]],
    val_y: np.ndarray,
    is_classification: bool,
    config: TrainConfig,
    min_len: int,
) -> dict:
    loss_fn = _make_loss(is_classification)

    def batch_arrays(seqs: list[list[int]]):
        return pad_batch(seqs, min_len=min_len)

    def train_step(idx, rng):
        ids, lengths = batch_arrays([enc_train[i] for i in idx])
        out, cache = model.forward(ids, lengths, train_mode=True, dropout_rng=rng)
        loss, d_out = loss_fn(out, train_y[idx])
        return loss, model.backward(cache, d_out)

    def validation_loss():
        total = 0.0
        for start in range(0, len(enc_val), 64):
            chunk = enc_val[start : start + 64]
            ids, lengths = batch_arrays(chunk)
            out, _ = model.forward(ids, lengths, train_mode=False)
            loss, _ = loss_fn(out, val_y[start : start + len(chunk)])
            total += loss * len(chunk)
        return total / len(enc_val)

    return _optimize(model.params, train_step, validation_loss, len(enc_train), config)


def train(
    kind: str,
    split: DatasetSplit,
    task: str,
    config: Optional[TrainConfig] = None,
    hyperparameters: Optional[dict] = None,
) -> tuple["bundle_mod.ModelBundle", dict]:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind: {kind!r}")
    config = config or TrainConfig()
    ttype = task_type(task)
    is_classification = ttype == "classification"

    if kind == "mfreq" and not is_classification:
        raise ValueError("mfreq is a classification baseline")
    if kind in ("median", "opt") and is_classification:
        raise ValueError(f"{kind} is a regression baseline")

    train_data = _extract(split, "train", task)
    if not train_data.statements:
        raise ValueError(f"no training examples carry a {task!r} label")

    hyper = default_hyperparameters(kind)
    hyper.update(hyperparameters or {})

    # --- reference predictors ------------------------------------------------
    if kind == "mfreq":
        model = baseline_mfreq(train_data.labels)
        b = bundle_mod.from_mfreq(model, task, config, len(train_data.labels))
        return b, {"epochs": [], "best_epoch": 0, "best_validation_loss": None}
    if kind == "median":
        model = baseline_median(train_data.labels)
        b = bundle_mod.from_median(model, task, config, len(train_data.labels))
        return b, {"epochs": [], "best_epoch": 0, "best_validation_loss": None}
    if kind == "opt":
        costs, values = [], []
        for q in split.part("train"):
            label = task_label(q, task)
            if label is not None and q.opt_cost_estimate is not None:
                costs.append(q.opt_cost_estimate)
                values.append(label)
        model = fit_opt_baseline(costs, values)
        b = bundle_mod.from_opt(model, task, config, len(values))
        return b, {"epochs": [], "best_epoch": 0, "best_validation_loss": None}

    # --- learned models ------------------------------------------------------
    val_data = _extract(split, "validation", task)
    if not val_data.statements:
        raise ValueError(f"no validation examples carry a {task!r} label")

    gran = granularity_of(kind)
    log: dict = {"model": kind, "task": task}

    if is_classification:
        classes = sorted(set(train_data.labels))
        class_idx = {c: i for i, c in enumerate(classes)}
        train_y = np.array([class_idx[y] for y in train_data.labels], dtype=np.int64)
        keep = [i for i, y in enumerate(val_data.labels) if y in class_idx]
        dropped = len(val_data.labels) - len(keep)
        if dropped:
            log["validation_dropped_unseen_classes"] = dropped
        val_data = _TaskData(
            statements=[val_data.statements[i] for i in keep],
            labels=[val_data.labels[i] for i in keep],
        )
        if not val_data.statements:
            raise ValueError("validation part shares no classes with training")
        val_y = np.array([class_idx[y] for y in val_data.labels], dtype=np.int64)
        transform = None
        n_outputs = len(classes)
    else:
        classes = None
        transform = fit_label_transform(train_data.labels)
        train_y = transform.apply(np.array(train_data.labels, dtype=np.float64))
        val_y = transform.apply(
            np.clip(np.array(val_data.labels, dtype=np.float64), transform.y_min, None)
        )
        n_outputs = 1

    if kind in ("ctfidf", "wtfidf"):
        vocab = feat.fit_ngram_vocabulary(train_data.statements, gran, hyper["vocab_size"])
        train_x = [feat.tfidf_vector(s, vocab) for s in train_data.statements]
        val_x = [feat.tfidf_vector(s, vocab) for s in val_data.statements]
        model, opt_log = fit_linear(
            train_x, train_y, val_x, val_y, n_outputs, is_classification, config
        )
        log.update(opt_log)
        b = bundle_mod.from_linear(
            model, kind, task, classes, transform, vocab, hyper, config, opt_log,
            len(train_x),
        )
        return b, log

    # token sequence models
    max_len = config.max_len or DEFAULT_MAX_LEN[gran]
    token_vocab = sqltext.build_vocabulary(
        (sqltext.tokenize(s, gran) for s in train_data.statements), gran, hyper["vocab_size"]
    )
    enc_train = [sqltext.encode(s, token_vocab, max_len)[0] for s in train_data.statements]
    enc_val = [sqltext.encode(s, token_vocab, max_len)[0] for s in val_data.statements]

    init_rng = np.random.default_rng(config.seed)
    if kind in ("ccnn", "wcnn"):
        model = CnnModel(
            vocab_size=len(token_vocab),
            n_outputs=n_outputs,
            embed_dim=hyper["embed_dim"],
            kernels_per_window=hyper["kernels_per_window"],
            windows=tuple(hyper["windows"]),
            dropout=hyper["dropout"],
            rng=init_rng,
        )
        min_len = max(model.windows)
    else:
        model = LstmModel(
            vocab_size=len(token_vocab),
            n_outputs=n_outputs,
            embed_dim=hyper["embed_dim"],
            hidden_size=hyper["hidden_size"],
            layers=hyper["layers"],
            rng=init_rng,
        )
        min_len = 1
    opt_log = _fit_sequence_model(
        model, enc_train, train_y, enc_val, val_y, is_classification, config, min_len
    )
    log.update(opt_log)
    b = bundle_mod.from_sequence_model(
        model, kind, task, classes, transform, token_vocab, hyper, config, opt_log,
        len(enc_train),
    )
    return b, log
