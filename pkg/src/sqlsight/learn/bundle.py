"""Self-contained model artifacts.

A bundle on disk is a JSON envelope (model kind, task, classes, label
transform, hyperparameters, hashes) next to a raw parameter blob --
little-endian float64, laid out per the envelope's shape manifest -- and,
for text models, the vocabulary file it was trained with.  Hashes tie the
three together; loading verifies them so a bundle can't silently run with
someone else's vocabulary.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sqlsight import features as feat
from sqlsight import sqltext
from sqlsight.learn.baselines import MedianModel, MfreqModel, OptCostModel
from sqlsight.learn.cnn import CnnModel, pad_batch
from sqlsight.learn.linear import LinearModel, densify
from sqlsight.learn.lstm import LstmModel
from sqlsight.learn.transforms import LabelTransform, softmax

FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    model_kind: str
    task: str
    task_type: str
    classes: Optional[list[str]]
    transform: Optional[LabelTransform]
    hyperparameters: dict
    train_config: dict
    params: dict[str, np.ndarray]
    vocabulary: Optional[sqltext.Vocabulary] = None
    ngram_vocabulary: Optional[feat.NgramVocabulary] = None
    extra: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


def _base_metrics(opt_log: dict, n_train: int, params: dict, vocab_size: int) -> dict:
    best = opt_log.get("best_validation_loss")
    if best is not None and not math.isfinite(best):
        best = None
    return {
        "parameter_count": int(sum(p.size for p in params.values())),
        "vocabulary_size": vocab_size,
        "train_examples": n_train,
        "best_epoch": opt_log.get("best_epoch", 0),
        "best_validation_loss": best,
        "epochs_run": len(opt_log.get("epochs", [])),
    }


def from_mfreq(model: MfreqModel, task: str, config, n_train: int) -> ModelBundle:
    params = {"class_shares": np.asarray(model.shares, dtype=np.float64)}
    return ModelBundle(
        model_kind="mfreq",
        task=task,
        task_type="classification",
        classes=list(model.classes),
        transform=None,
        hyperparameters={},
        train_config=config.to_dict(),
        params=params,
        extra={"predicted_class": model.predicted_class},
        metrics=_base_metrics({}, n_train, params, 0),
    )


def from_median(model: MedianModel, task: str, config, n_train: int) -> ModelBundle:
    params = {"constant": np.array([model.constant_transformed], dtype=np.float64)}
    return ModelBundle(
        model_kind="median",
        task=task,
        task_type="regression",
        classes=None,
        transform=model.transform,
        hyperparameters={},
        train_config=config.to_dict(),
        params=params,
        metrics=_base_metrics({}, n_train, params, 0),
    )


def from_opt(model: OptCostModel, task: str, config, n_train: int) -> ModelBundle:
    params = {
        "intercept": np.array([model.intercept], dtype=np.float64),
        "slope": np.array([model.slope], dtype=np.float64),
    }
    return ModelBundle(
        model_kind="opt",
        task=task,
        task_type="regression",
        classes=None,
        transform=model.transform,
        hyperparameters={},
        train_config=config.to_dict(),
        params=params,
        metrics=_base_metrics({}, n_train, params, 0),
    )


def from_linear(
    model: LinearModel,
    kind: str,
    task: str,
    classes: Optional[list[str]],
    transform: Optional[LabelTransform],
    vocabulary: feat.NgramVocabulary,
    hyper: dict,
    config,
    opt_log: dict,
    n_train: int,
) -> ModelBundle:
    return ModelBundle(
        model_kind=kind,
        task=task,
        task_type="classification" if classes is not None else "regression",
        classes=classes,
        transform=transform,
        hyperparameters=dict(hyper),
        train_config=config.to_dict(),
        params=model.params,
        ngram_vocabulary=vocabulary,
        metrics=_base_metrics(opt_log, n_train, model.params, len(vocabulary)),
    )


def from_sequence_model(
    model,
    kind: str,
    task: str,
    classes: Optional[list[str]],
    transform: Optional[LabelTransform],
    vocabulary: sqltext.Vocabulary,
    hyper: dict,
    config,
    opt_log: dict,
    n_train: int,
) -> ModelBundle:
    return ModelBundle(
        model_kind=kind,
        task=task,
        task_type="classification" if classes is not None else "regression",
        classes=classes,
        transform=transform,
        hyperparameters=dict(hyper),
        train_config=config.to_dict(),
        params=model.params,
        vocabulary=vocabulary,
        metrics=_base_metrics(opt_log, n_train, model.params, len(vocabulary)),
    )


# --- disk format ---------------------------------------------------------------

def _params_blob(params: dict[str, np.ndarray]) -> tuple[bytes, list]:
    manifest = []
    chunks = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        manifest.append([name, list(arr.shape)])
        chunks.append(arr.tobytes())
    return b"".join(chunks), manifest


def save_bundle(bundle: ModelBundle, out_dir: str, name: str = "bundle") -> str:
    """Write envelope + parameter blob (+ vocabulary) into out_dir; returns
    the envelope path."""
    os.makedirs(out_dir, exist_ok=True)
    blob, manifest = _params_blob(bundle.params)
    params_file = f"{name}.params.bin"
    with open(os.path.join(out_dir, params_file), "wb") as fh:
        fh.write(blob)

    vocab_file = None
    vocab_sha = None
    if bundle.vocabulary is not None:
        vocab_file = "vocabulary.json"
        vocab_json = sqltext.vocabulary_to_json(bundle.vocabulary)
        with open(os.path.join(out_dir, vocab_file), "w", encoding="utf-8") as fh:
            fh.write(vocab_json + "\n")
        vocab_sha = hashlib.sha256(vocab_json.encode("utf-8")).hexdigest()
    elif bundle.ngram_vocabulary is not None:
        vocab_file = "vocabulary.json"
        vocab_json = feat.ngram_vocabulary_to_json(bundle.ngram_vocabulary)
        with open(os.path.join(out_dir, vocab_file), "w", encoding="utf-8") as fh:
            fh.write(vocab_json + "\n")
        vocab_sha = hashlib.sha256(vocab_json.encode("utf-8")).hexdigest()

    envelope = {
        "kind": "sqlsight.model_bundle",
        "format_version": FORMAT_VERSION,
        "model": bundle.model_kind,
        "task": bundle.task,
        "task_type": bundle.task_type,
        "classes": bundle.classes,
        "label_transform": {"y_min": bundle.transform.y_min} if bundle.transform else None,
        "hyperparameters": bundle.hyperparameters,
        "train_config": bundle.train_config,
        "parameters_file": params_file,
        "parameters_sha256": hashlib.sha256(blob).hexdigest(),
        "shape_manifest": manifest,
        "vocabulary_file": vocab_file,
        "vocabulary_sha256": vocab_sha,
        "extra": bundle.extra,
        "metrics": bundle.metrics,
    }
    path = os.path.join(out_dir, f"{name}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(envelope, sort_keys=True, indent=1) + "\n")
    return path


def resolve_bundle_path(path: str) -> str:
    """Accept the directory save_bundle wrote into, not just the envelope file."""
    if os.path.isdir(path):
        return os.path.join(path, "bundle.json")
    return path


def load_bundle(path: str) -> ModelBundle:
    path = resolve_bundle_path(path)
    with open(path, "r", encoding="utf-8") as fh:
        envelope = json.load(fh)
    if envelope.get("kind") != "sqlsight.model_bundle":
        raise ValueError(f"{path}: not a sqlsight model bundle")
    if envelope.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported bundle format_version")
    base = os.path.dirname(os.path.abspath(path))

    with open(os.path.join(base, envelope["parameters_file"]), "rb") as fh:
        blob = fh.read()
    if hashlib.sha256(blob).hexdigest() != envelope["parameters_sha256"]:
        raise ValueError(f"{path}: parameter blob does not match its recorded hash")

    params: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in envelope["shape_manifest"]:
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        arr = np.frombuffer(blob[offset : offset + size], dtype="<f8").reshape(shape)
        params[name] = arr.astype(np.float64).copy()
        offset += size
    if offset != len(blob):
        raise ValueError(f"{path}: parameter blob length disagrees with the shape manifest")

    vocabulary = None
    ngram_vocabulary = None
    if envelope.get("vocabulary_file"):
        vpath = os.path.join(base, envelope["vocabulary_file"])
        with open(vpath, "r", encoding="utf-8") as fh:
            vtext = fh.read().strip()
        if hashlib.sha256(vtext.encode("utf-8")).hexdigest() != envelope["vocabulary_sha256"]:
            raise ValueError(f"{path}: bundle/vocabulary mismatch (hash differs)")
        head = json.loads(vtext)
        if head.get("kind") == "sqlsight.vocabulary":
            vocabulary = sqltext.vocabulary_from_json(vtext)
        elif head.get("kind") == "sqlsight.ngram_vocabulary":
            ngram_vocabulary = feat.ngram_vocabulary_from_json(vtext)
        else:
            raise ValueError(f"{vpath}: unknown vocabulary kind")

    transform = None
    if envelope.get("label_transform"):
        transform = LabelTransform(y_min=envelope["label_transform"]["y_min"])

    return ModelBundle(
        model_kind=envelope["model"],
        task=envelope["task"],
        task_type=envelope["task_type"],
        classes=envelope.get("classes"),
        transform=transform,
        hyperparameters=envelope.get("hyperparameters", {}),
        train_config=envelope.get("train_config", {}),
        params=params,
        vocabulary=vocabulary,
        ngram_vocabulary=ngram_vocabulary,
        extra=envelope.get("extra", {}),
        metrics=envelope.get("metrics", {}),
    )


# --- prediction ----------------------------------------------------------------

def _rebuild_model(bundle: ModelBundle):
    hyper = bundle.hyperparameters
    n_outputs = len(bundle.classes) if bundle.classes is not None else 1
    if bundle.model_kind in ("ccnn", "wcnn"):
        model = CnnModel(
            vocab_size=len(bundle.vocabulary),
            n_outputs=n_outputs,
            embed_dim=hyper["embed_dim"],
            kernels_per_window=hyper["kernels_per_window"],
            windows=tuple(hyper["windows"]),
            dropout=hyper.get("dropout", 0.0),
        )
    elif bundle.model_kind in ("clstm", "wlstm"):
        model = LstmModel(
            vocab_size=len(bundle.vocabulary),
            n_outputs=n_outputs,
            embed_dim=hyper["embed_dim"],
            hidden_size=hyper["hidden_size"],
            layers=hyper["layers"],
        )
    else:
        raise ValueError(f"not a sequence model: {bundle.model_kind}")
    expected = set(model.params)
    got = set(bundle.params)
    if expected != got:
        raise ValueError("bundle parameters do not fit the declared architecture")
    model.params = bundle.params
    return model


def normalize_statement(statement: str) -> str:
    """Apply the ingestion-side statement identity rules: trailing
    whitespace is irrelevant and an empty submission reads as 'Empty'."""
    statement = statement.rstrip()
    return statement if statement else "Empty"


def predict(
    bundle: ModelBundle, statement: str, opt_cost_estimate: Optional[float] = None
) -> dict:
    """Run one statement through a bundle.  Classification returns the full
    class distribution plus its argmax; regression returns the prediction in
    both transformed and raw label space."""
    statement = normalize_statement(statement)
    kind = bundle.model_kind

    if kind == "mfreq":
        dist = {c: s for c, s in zip(bundle.classes, bundle.params["class_shares"].tolist())}
        return _classification_result(bundle, dist)
    if kind == "median":
        z = float(bundle.params["constant"][0])
        return _regression_result(bundle, z)
    if kind == "opt":
        if opt_cost_estimate is None:
            raise ValueError("the opt baseline predicts from a planner cost; pass opt_cost_estimate")
        z = float(bundle.params["slope"][0]) * float(opt_cost_estimate) + float(
            bundle.params["intercept"][0]
        )
        return _regression_result(bundle, z)

    if kind in ("ctfidf", "wtfidf"):
        vec = feat.tfidf_vector(statement, bundle.ngram_vocabulary)
        x = densify([vec])
        out = x @ bundle.params["w"].T + bundle.params["b"]
    elif kind in ("ccnn", "wcnn", "clstm", "wlstm"):
        model = _rebuild_model(bundle)
        max_len = bundle.train_config.get("max_len") or None
        if max_len is None:
            from sqlsight.learn.training import DEFAULT_MAX_LEN

            max_len = DEFAULT_MAX_LEN[bundle.vocabulary.granularity]
        ids, _ = sqltext.encode(statement, bundle.vocabulary, max_len)
        min_len = max(model.windows) if isinstance(model, CnnModel) else 1
        arr, lengths = pad_batch([ids], min_len=min_len)
        out, _ = model.forward(arr, lengths, train_mode=False)
    else:
        raise ValueError(f"unknown model kind: {kind!r}")

    if bundle.task_type == "classification":
        probs = softmax(out)[0]
        dist = {c: float(p) for c, p in zip(bundle.classes, probs)}
        return _classification_result(bundle, dist)
    return _regression_result(bundle, float(out[0, 0]))


def _classification_result(bundle: ModelBundle, distribution: dict[str, float]) -> dict:
    # argmax; a tie resolves to the lexicographically smaller class because
    # the bundle's class list is sorted
    best = max(distribution.values())
    predicted = next(c for c in bundle.classes if distribution[c] == best)
    return {
        "task": bundle.task,
        "model": bundle.model_kind,
        "type": "classification",
        "predicted_class": predicted,
        "distribution": {c: distribution[c] for c in sorted(distribution)},
    }


def _regression_result(bundle: ModelBundle, z: float) -> dict:
    return {
        "task": bundle.task,
        "model": bundle.model_kind,
        "type": "regression",
        "value_transformed": z,
        "value": float(bundle.transform.invert(z)),
    }


def predict_many(
    bundle: ModelBundle,
    statements: list[str],
    opt_cost_estimates: Optional[list[Optional[float]]] = None,
    batch_size: int = 64,
) -> list[dict]:
    """Batched version of `predict` for evaluation runs.  Output dicts match
    predict()'s exactly."""
    statements = [normalize_statement(s) for s in statements]
    kind = bundle.model_kind

    if kind in ("mfreq", "median"):
        return [predict(bundle, s) for s in statements]
    if kind == "opt":
        if opt_cost_estimates is None:
            raise ValueError("the opt baseline predicts from planner costs; pass opt_cost_estimates")
        return [
            predict(bundle, s, opt_cost_estimate=c)
            for s, c in zip(statements, opt_cost_estimates)
        ]

    outputs = np.zeros((len(statements), len(bundle.classes) if bundle.classes else 1))
    if kind in ("ctfidf", "wtfidf"):
        for start in range(0, len(statements), batch_size):
            chunk = statements[start : start + batch_size]
            x = densify([feat.tfidf_vector(s, bundle.ngram_vocabulary) for s in chunk])
            outputs[start : start + len(chunk)] = x @ bundle.params["w"].T + bundle.params["b"]
    else:
        model = _rebuild_model(bundle)
        max_len = bundle.train_config.get("max_len") or None
        if max_len is None:
            from sqlsight.learn.training import DEFAULT_MAX_LEN

            max_len = DEFAULT_MAX_LEN[bundle.vocabulary.granularity]
        min_len = max(model.windows) if isinstance(model, CnnModel) else 1
        encoded = [sqltext.encode(s, bundle.vocabulary, max_len)[0] for s in statements]
        for start in range(0, len(statements), batch_size):
            chunk = encoded[start : start + batch_size]
            arr, lengths = pad_batch(chunk, min_len=min_len)
            out, _ = model.forward(arr, lengths, train_mode=False)
            outputs[start : start + len(chunk)] = out

    results = []
    if bundle.task_type == "classification":
        probs = softmax(outputs)
        for row in probs:
            dist = {c: float(p) for c, p in zip(bundle.classes, row)}
            results.append(_classification_result(bundle, dist))
    else:
        for z in outputs[:, 0]:
            results.append(_regression_result(bundle, float(z)))
    return results


def payload_json(payload: dict) -> str:
    """Canonical rendering shared by cmd_predict and the HTTP service, so
    the two are byte-identical for the same statement."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def predict_payload(
    bundles: list[ModelBundle],
    statement: str,
    opt_cost_estimate: Optional[float] = None,
    include_profile: bool = True,
) -> dict:
    """The shared prediction document used by both the CLI and the HTTP
    service: per-task predictions plus the statement's syntactic profile."""
    normalized = normalize_statement(statement)
    predictions = {}
    for b in bundles:
        predictions[b.task] = predict(b, normalized, opt_cost_estimate)
    payload = {
        "statement": normalized,
        "predictions": predictions,
    }
    if include_profile:
        payload["profile"] = sqltext.parse_syntactic_profile(normalized).to_dict()
    return payload
