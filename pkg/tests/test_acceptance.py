"""Release gate: one test per core guarantee, each reporting a PASS/FAIL line.

Run directly (`python3 -m pytest tests/test_acceptance.py -s -v`) to see the
per-guarantee lines; the suite is also part of the default pytest run.
"""

import math
import random
import statistics
import time
from contextlib import contextmanager
from datetime import datetime, timedelta, timezone

import numpy as np

from sqlsight import cli, metrics, sqltext, workload
from sqlsight.features import fit_ngram_vocabulary, tfidf_vector
from sqlsight.learn import TrainConfig, train
from sqlsight.learn.cnn import CnnModel, pad_batch
from sqlsight.learn.lstm import LstmModel
from sqlsight.learn.bundle import predict_many
from sqlsight.learn.transforms import (
    LabelTransform,
    cross_entropy,
    fit_label_transform,
    huber_loss,
)

import synth


@contextmanager
def criterion(label: str):
    """Print one [PASS]/[FAIL] line per guarantee, whatever pytest captures."""
    try:
        yield
    except BaseException:
        print(f"[FAIL] {label}")
        raise
    print(f"[PASS] {label}")


# ---------------------------------------------------------------------------
# 1. syntactic profile of the worked astronomy-survey example
# ---------------------------------------------------------------------------

WORKED_EXAMPLE = """SELECT dbo.fGetURLExpid(objid)
FROM SpecPhoto
WHERE modelmag_u-modelmag_g =
    (SELECT min(modelmag_u-modelmag_g)
     FROM SpecPhoto AS s INNER JOIN PhotoObj AS p
     ON s.objid=p.objid
     WHERE (s.flags_g=0 OR p.psfmagerr_g<=0.2 AND
     p.psfmagerr_u<=0.2)"""


def test_worked_example_profile():
    with criterion("worked-example syntactic profile matches exactly"):
        p = sqltext.parse_syntactic_profile(WORKED_EXAMPLE)
        assert p.n_functions == 2
        assert p.n_unique_tables == 2
        assert p.n_selected_columns == 3
        assert p.n_predicates == 5
        assert p.n_predicate_table_names == 7
        assert p.nestedness_level == 1
        assert p.nested_aggregation is True


# ---------------------------------------------------------------------------
# 2. gradient suite: analytic backprop vs central finite differences
# ---------------------------------------------------------------------------

FD_STEP = 1e-4
REL_TOL = 1e-3


def _loss(model, ids, lengths, targets, kind):
    out, _ = model.forward(ids, lengths, train_mode=False)
    if kind == "huber":
        value, _ = huber_loss(out[:, 0], targets)
    else:
        value, _ = cross_entropy(out, targets)
    return value


def _grads(model, ids, lengths, targets, kind):
    out, cache = model.forward(ids, lengths, train_mode=False)
    if kind == "huber":
        _, d = huber_loss(out[:, 0], targets)
        d_out = d[:, None]
    else:
        _, d_out = cross_entropy(out, targets)
    return model.backward(cache, d_out)


def _check_all_parameters(model, ids, lengths, targets, kind):
    grads = _grads(model, ids, lengths, targets, kind)
    embed_cols = model.params["embedding"].shape[1]
    checked = 0
    for name, g in grads.items():
        flat_g = g.ravel()
        flat_p = model.params[name].ravel()
        for idx in range(flat_p.size):
            if name == "embedding" and idx < embed_cols:
                continue  # the padding row is pinned at zero by construction
            orig = flat_p[idx]
            flat_p[idx] = orig + FD_STEP
            up = _loss(model, ids, lengths, targets, kind)
            flat_p[idx] = orig - FD_STEP
            down = _loss(model, ids, lengths, targets, kind)
            flat_p[idx] = orig
            fd = (up - down) / (2 * FD_STEP)
            if abs(fd) < 1e-10 and abs(flat_g[idx]) < 1e-10:
                continue  # inactive unit: both sides agree the slope is zero
            err = abs(flat_g[idx] - fd) / max(abs(flat_g[idx]), abs(fd), 1e-8)
            assert err < REL_TOL, (name, idx, flat_g[idx], fd, err)
            checked += 1
    return checked


def test_gradient_suite():
    with criterion("gradient suite (tiny CNN + 3-layer LSTM) < 1e-3, < 30 s"):
        start = time.time()
        rng = np.random.default_rng(11)
        seqs = [list(rng.integers(1, 11, size=n)) for n in (6, 9, 12, 5, 8, 10)]
        targets_reg = rng.normal(size=len(seqs))
        targets_cls = rng.integers(0, 3, size=len(seqs))

        cnn = CnnModel(vocab_size=11, n_outputs=1, embed_dim=2,
                       kernels_per_window=1, windows=(3, 4, 5), dropout=0.0,
                       rng=np.random.default_rng(7))
        for m in (3, 4, 5):
            cnn.params[f"conv_b_{m}"] += 0.5  # keep most ReLU units active
        ids, lengths = pad_batch(seqs)
        assert _check_all_parameters(cnn, ids, lengths, targets_reg, "huber") > 50

        lstm = LstmModel(vocab_size=11, n_outputs=3, embed_dim=2,
                         hidden_size=2, layers=3, rng=np.random.default_rng(8))
        ids, lengths = pad_batch(seqs, min_len=1)
        assert _check_all_parameters(lstm, ids, lengths, targets_cls, "ce") > 100

        assert time.time() - start < 30.0


# ---------------------------------------------------------------------------
# 3. TFIDF against a brute-force oracle
# ---------------------------------------------------------------------------

def _oracle_vector(statement, vocab):
    from sqlsight.features import NGRAM_JOIN

    tokens = sqltext.tokenize(statement, vocab.granularity)
    counts = {}
    for n in range(1, 6):
        for i in range(len(tokens) - n + 1):
            g = NGRAM_JOIN.join(tokens[i : i + n])
            if g in vocab.index:
                counts[g] = counts.get(g, 0) + 1
    total = sum(counts.values())
    out = {}
    for g, c in counts.items():
        idx = vocab.index[g]
        idf = math.log(vocab.n_documents / (1 + vocab.df[idx]))
        out[idx] = (c / total) * idf
    return out


def test_tfidf_oracle():
    with criterion("TFIDF vectors equal the brute-force oracle on 20 corpora"):
        for seed in range(20):
            rng = random.Random(seed)
            corpus = [synth.random_statement(rng)
                      for _ in range(rng.randrange(5, 51))]
            gran = "char" if seed % 2 == 0 else "word"
            vocab = fit_ngram_vocabulary(corpus, gran, 150)
            for statement in corpus:
                got = tfidf_vector(statement, vocab)
                want = _oracle_vector(statement, vocab)  # index -> weight
                assert set(got.indices) == set(want)
                for idx, value in zip(got.indices, got.values):
                    assert abs(value - want[idx]) < 1e-12


# ---------------------------------------------------------------------------
# 4. loss identities
# ---------------------------------------------------------------------------

def test_loss_identities():
    with criterion("Huber/cross-entropy/qerror/transform identities hold"):
        for r, expected in ((0.5, 0.125), (1.0, 0.5), (2.0, 1.5)):
            value, _ = huber_loss(np.array([r]), np.array([0.0]))
            assert abs(value - expected) < 1e-12

        value, _ = cross_entropy(np.zeros((1, 3)), np.array([1]))
        assert abs(value - math.log(3)) < 1e-12

        assert metrics.qerror(8.0, 2.0) == 4.0

        transform = LabelTransform(y_min=-1.0)
        for y in (-1.0, 0.0, 0.5, 7.0, 1234.5):
            z = transform.apply(np.array([y]))[0]
            assert abs(transform.invert(z) - y) < 1e-9


# ---------------------------------------------------------------------------
# 5. baseline reproduction on a workload-shaped sample
# ---------------------------------------------------------------------------

def test_baseline_reproduction():
    with criterion("mfreq picks success/no_web_hit; median equals train median"):
        ds = synth.survey_like_split(seed=0)
        cfg = TrainConfig(seed=0)

        mf_err, _ = train("mfreq", ds, "error", cfg)
        assert mf_err.extra["predicted_class"] == "success"
        mf_sess, _ = train("mfreq", ds, "session", cfg)
        assert mf_sess.extra["predicted_class"] == "no_web_hit"

        for task, getter in (("cpu", lambda q: q.cpu_time_s),
                             ("rows", lambda q: q.answer_rows)):
            bundle, _ = train("median", ds, task, cfg)
            labels = [getter(q) for q in ds.train]
            expected_transform = fit_label_transform(labels)
            expected = statistics.median(
                float(expected_transform.apply(np.array([y]))[0]) for y in labels
            )
            assert abs(bundle.params["constant"][0] - expected) < 1e-12

        # the sample is shaped like the full astronomy workload, so the
        # transformed medians land on the published constants
        cpu_bundle, _ = train("median", ds, "cpu", cfg)
        rows_bundle, _ = train("median", ds, "rows", cfg)
        assert cpu_bundle.params["constant"][0] == 0.0
        assert abs(rows_bundle.params["constant"][0] - 1.099) < 5e-4


# ---------------------------------------------------------------------------
# 6. planted-signal training: neural models beat the median baseline
# ---------------------------------------------------------------------------

def _validation_mse(bundle, split):
    truths = np.array(
        [q.cpu_time_s for q in split.validation], dtype=np.float64
    )
    results = predict_many(bundle, [q.statement for q in split.validation])
    z = np.array([r["value_transformed"] for r in results])
    t = bundle.transform.apply(np.clip(truths, bundle.transform.y_min, None))
    return float(np.mean((z - t) ** 2))


def test_planted_signal_training():
    with criterion("ccnn and clstm reach <= 0.25x median MSE in <= 10 epochs"):
        start = time.time()
        ds = synth.planted_join_split(n=2000, seed=0)

        median_bundle, _ = train("median", ds, "cpu", TrainConfig(seed=0))
        median_mse = _validation_mse(median_bundle, ds)
        target = 0.25 * median_mse

        config = TrainConfig(batch_size=32, learning_rate=0.005, max_epochs=10,
                             patience=10, seed=0, max_len=110)
        cnn_bundle, cnn_log = train(
            "ccnn", ds, "cpu", config,
            {"vocab_size": 100, "embed_dim": 12, "kernels_per_window": 8,
             "windows": [3, 4, 5], "dropout": 0.0},
        )
        lstm_bundle, lstm_log = train(
            "clstm", ds, "cpu", config,
            {"vocab_size": 100, "embed_dim": 12, "hidden_size": 24, "layers": 3},
        )

        assert len(cnn_log["epochs"]) <= 10
        assert len(lstm_log["epochs"]) <= 10
        assert _validation_mse(cnn_bundle, ds) <= target
        assert _validation_mse(lstm_bundle, ds) <= target
        assert time.time() - start < 600.0


# ---------------------------------------------------------------------------
# 7. class-imbalance behaviour (97/2/1)
# ---------------------------------------------------------------------------

def _f1_by_class(bundle, split):
    truths = [q.error_class for q in split.test]
    results = predict_many(bundle, [q.statement for q in split.test])
    report = metrics.classification_report(
        truths,
        [r["predicted_class"] for r in results],
        [r["distribution"] for r in results],
    )
    return {c: row["f1"] for c, row in report["per_class"].items()}


def test_class_imbalance_behaviour():
    with criterion("mfreq F=0 on minorities; ctfidf F>0 on learnable minority"):
        ds = synth.imbalanced_error_split(n=1000, seed=0)

        mf, _ = train("mfreq", ds, "error", TrainConfig(seed=0))
        mf_f1 = _f1_by_class(mf, ds)
        assert mf_f1["non_severe"] == 0.0
        assert mf_f1["severe"] == 0.0
        assert mf_f1["success"] > 0.9

        tf, _ = train(
            "ctfidf", ds, "error",
            TrainConfig(batch_size=16, learning_rate=0.02, max_epochs=25,
                        patience=25, seed=0),
            {"vocab_size": 2000},
        )
        tf_f1 = _f1_by_class(tf, ds)
        assert tf_f1["severe"] > 0.0
        assert tf_f1["non_severe"] > 0.0


# ---------------------------------------------------------------------------
# 8. determinism of the full pipeline
# ---------------------------------------------------------------------------

def test_pipeline_determinism(tmp_path):
    with criterion("same-seed pipeline runs are byte-identical end to end"):
        log_path = tmp_path / "workload.csv"
        synth.write_workload_csv(str(log_path), n_rows=300, seed=11)

        outputs = []
        for run in ("one", "two"):
            root = tmp_path / run
            ds = root / "dataset"
            model = root / "model"
            ev = root / "eval"
            assert cli.main(["ingest", "--workload", str(log_path),
                             "--seed", "7", "--out", str(ds)]) == 0
            assert cli.main(["train", "--dataset", str(ds / "dataset.jsonl"),
                             "--task", "error", "--model", "ctfidf",
                             "--seed", "7", "--max-epochs", "3",
                             "--allow-custom", "--vocab-size", "300",
                             "--out", str(model)]) == 0
            assert cli.main(["evaluate", "--bundle", str(model / "bundle.json"),
                             "--dataset", str(ds / "dataset.jsonl"),
                             "--out", str(ev)]) == 0
            outputs.append(root)

        one, two = outputs
        for rel in (
            "dataset/dataset.jsonl", "dataset/stats.json", "dataset/manifest.json",
            "model/bundle.json", "model/bundle.params.bin", "model/vocabulary.json",
            "model/training_log.json",
            "eval/report.json", "eval/report.csv",
        ):
            a = (one / rel).read_bytes()
            b = (two / rel).read_bytes()
            assert a == b, f"{rel} differs between same-seed runs"


# ---------------------------------------------------------------------------
# 9. sessionization and label-aggregation fixtures
# ---------------------------------------------------------------------------

BASE_TIME = datetime(2021, 4, 1, 9, 0, 0, tzinfo=timezone.utc)


def _entry(source, offset_s, statement, **labels):
    return workload.QueryLogEntry(
        statement=statement,
        source_key=source,
        timestamp=BASE_TIME + timedelta(seconds=offset_s),
        **labels,
    )


def test_sessionization_and_aggregation_rules():
    with criterion("session gap boundary, vote, tie seed, numeric averaging"):
        # the half-hour boundary itself stays in one session; beyond it splits
        boundary = workload.sessionize([
            _entry("u", 0, "SELECT 1"),
            _entry("u", 1800.0, "SELECT 2"),
        ])
        assert len(boundary) == 1
        split_apart = workload.sessionize([
            _entry("u", 0, "SELECT 1"),
            _entry("u", 1800.001, "SELECT 2"),
        ])
        assert len(split_apart) == 2

        # numeric labels average; a missing value simply drops out
        merged = workload.dedup_and_aggregate([
            _entry("u", 0, "SELECT a FROM t", cpu_time_s=1.0, answer_rows=10.0),
            _entry("v", 0, "SELECT a FROM t", cpu_time_s=3.0),
        ], seed=0)
        assert len(merged) == 1
        assert merged[0].cpu_time_s == 2.0
        assert merged[0].answer_rows == 10.0
        assert merged[0].multiplicity == 2

        # categorical labels take the majority
        voted = workload.dedup_and_aggregate([
            _entry("a", 0, "SELECT b FROM t", session_class="browser"),
            _entry("b", 0, "SELECT b FROM t", session_class="browser"),
            _entry("c", 0, "SELECT b FROM t", session_class="bot"),
        ], seed=0)
        assert voted[0].session_class == "browser"

        # an exact tie resolves by seed, identically on every run
        tied_entries = [
            _entry("a", 0, "SELECT c FROM t", session_class="browser"),
            _entry("b", 0, "SELECT c FROM t", session_class="bot"),
        ]
        first = workload.dedup_and_aggregate(tied_entries, seed=5)[0].session_class
        for _ in range(5):
            again = workload.dedup_and_aggregate(tied_entries, seed=5)[0].session_class
            assert again == first


if __name__ == "__main__":
    import sys

    import pytest as _pytest

    sys.exit(_pytest.main([__file__, "-s", "-v"] + sys.argv[1:]))
