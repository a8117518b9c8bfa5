"""Bag-of-n-grams TFIDF features over statement tokens.

N-grams of length 1..5 are pooled into one vocabulary ranked by corpus
frequency.  A statement's feature value for gram g is

    (count of g / total in-vocabulary gram occurrences) * ln(N / (1 + df_g))

with N the number of training statements and df_g the document frequency.
The IDF can go negative for grams present in most statements; that is kept
as-is rather than floored.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from sqlsight import sqltext

NGRAM_SIZES = (1, 2, 3, 4, 5)
# joins the tokens of one gram; non-printable so multi-token grams cannot
# collide with single tokens that happen to contain the separator
NGRAM_JOIN = "\x1f"

DEFAULT_TFIDF_VOCAB = {"char": 5000, "word": 50000}


def statement_ngrams(tokens: Sequence[str], sizes: Sequence[int] = NGRAM_SIZES) -> list[str]:
    grams: list[str] = []
    for n in sizes:
        if n == 1:
            grams.extend(tokens)
            continue
        for i in range(len(tokens) - n + 1):
            grams.append(NGRAM_JOIN.join(tokens[i : i + n]))
    return grams


@dataclass
class NgramVocabulary:
    granularity: str
    ngrams: list[str]
    df: list[int]
    n_documents: int
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {g: i for i, g in enumerate(self.ngrams)}

    def __len__(self) -> int:
        return len(self.ngrams)


@dataclass
class SparseVector:
    indices: list[int]
    values: list[float]
    size: int


def fit_ngram_vocabulary(
    statements: Iterable[str], granularity: str, max_size: int
) -> NgramVocabulary:
    """Keep the max_size most frequent grams (total occurrences across the
    corpus, ties broken lexicographically) with their document frequencies."""
    if max_size < 1:
        raise ValueError("max_size must be positive")
    totals: Counter[str] = Counter()
    doc_freq: Counter[str] = Counter()
    n_docs = 0
    for statement in statements:
        n_docs += 1
        grams = statement_ngrams(sqltext.tokenize(statement, granularity))
        totals.update(grams)
        doc_freq.update(set(grams))
    if n_docs == 0:
        raise ValueError("cannot fit an n-gram vocabulary on an empty corpus")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    ngrams = [g for g, _ in ranked]
    return NgramVocabulary(
        granularity=granularity,
        ngrams=ngrams,
        df=[doc_freq[g] for g in ngrams],
        n_documents=n_docs,
    )


def tfidf_vector(statement: str, vocabulary: NgramVocabulary) -> SparseVector:
    """TFIDF weights for one statement against a fitted vocabulary, sparse
    and sorted by gram index.  Statements sharing no gram with the
    vocabulary yield an empty vector."""
    tokens = sqltext.tokenize(statement, vocabulary.granularity)
    counts: Counter[str] = Counter()
    total = 0
    for gram in statement_ngrams(tokens):
        idx = vocabulary.index.get(gram)
        if idx is not None:
            counts[gram] += 1
            total += 1
    if total == 0:
        return SparseVector(indices=[], values=[], size=len(vocabulary))
    n = vocabulary.n_documents
    indices = sorted(vocabulary.index[g] for g in counts)
    values = []
    for idx in indices:
        gram = vocabulary.ngrams[idx]
        tf = counts[gram] / total
        idf = math.log(n / (1 + vocabulary.df[idx]))
        values.append(tf * idf)
    return SparseVector(indices=indices, values=values, size=len(vocabulary))


def ngram_vocabulary_to_json(vocabulary: NgramVocabulary) -> str:
    return json.dumps(
        {
            "kind": "sqlsight.ngram_vocabulary",
            "format_version": 1,
            "granularity": vocabulary.granularity,
            "ngrams": vocabulary.ngrams,
            "df": vocabulary.df,
            "n_documents": vocabulary.n_documents,
        },
        sort_keys=True,
    )


def ngram_vocabulary_from_json(text: str) -> NgramVocabulary:
    data = json.loads(text)
    if data.get("kind") != "sqlsight.ngram_vocabulary":
        raise ValueError("not a sqlsight n-gram vocabulary")
    return NgramVocabulary(
        granularity=data["granularity"],
        ngrams=list(data["ngrams"]),
        df=list(data["df"]),
        n_documents=data["n_documents"],
    )


def ngram_vocabulary_sha256(vocabulary: NgramVocabulary) -> str:
    return hashlib.sha256(ngram_vocabulary_to_json(vocabulary).encode("utf-8")).hexdigest()
