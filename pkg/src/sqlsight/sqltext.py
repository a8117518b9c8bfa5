"""Statement text handling: tokenizers, vocabularies, syntactic profiles.

Two token granularities feed the models.  Character tokens keep the raw
statement byte-for-byte (case and literals intact) so the models can react
to malformed input.  Word tokens normalize aggressively: punctuation is
split out, text is lowercased, and digit runs collapse to a single marker
so numeric literals don't blow up the vocabulary.

The syntactic profile is a lightweight structural scan of a statement --
counts of functions, tables, predicates and so on -- computed without a
full grammar, so arbitrary junk text degrades gracefully instead of
failing.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Marker tokens.  Deliberately lowercase, digit-free and free of the word
# tokenizer's punctuation set, so a tokenized-then-joined statement
# re-tokenizes to the same sequence.
PAD_TOKEN = "#pad#"
UNK_TOKEN = "#unk#"
DIGIT_TOKEN = "#digit#"

PAD_ID = 0
UNK_ID = 1
DIGIT_ID = 2

_WORD_PUNCT = set("(),;.=<>+-*/%'\"")
_DIGIT_RUN = re.compile(r"(\d+)")


def tokenize_chars(statement: str) -> list[str]:
    """One token per Unicode character, case preserved, spaces included."""
    if not statement:
        raise ValueError("cannot tokenize an empty statement")
    return list(statement)


def tokenize_words(statement: str) -> list[str]:
    """Lowercased word tokens with punctuation split out and digit runs
    replaced by the digit marker.

    ``x=10``  -> ``['x', '=', '#digit#']``
    ``3.5e2`` -> ``['#digit#', '.', '#digit#', 'e', '#digit#']``
    """
    spaced = []
    for ch in statement:
        if ch in _WORD_PUNCT:
            spaced.append(f" {ch} ")
        else:
            spaced.append(ch)
    tokens: list[str] = []
    for raw in "".join(spaced).split():
        for piece in _DIGIT_RUN.split(raw.lower()):
            if not piece:
                continue
            tokens.append(DIGIT_TOKEN if piece[0].isdigit() else piece)
    if not tokens:
        raise ValueError("statement reduced to zero tokens")
    return tokens


def tokenize(statement: str, granularity: str) -> list[str]:
    if granularity == "char":
        return tokenize_chars(statement)
    if granularity == "word":
        return tokenize_words(statement)
    raise ValueError(f"unknown granularity: {granularity!r}")


@dataclass
class Vocabulary:
    """Frequency-ranked token table with reserved slots at the front.

    Index 0 is padding and index 1 the out-of-vocabulary marker; word
    vocabularies additionally pin the digit marker at index 2.
    """

    granularity: str
    tokens: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)


def reserved_tokens(granularity: str) -> list[str]:
    if granularity == "char":
        return [PAD_TOKEN, UNK_TOKEN]
    if granularity == "word":
        return [PAD_TOKEN, UNK_TOKEN, DIGIT_TOKEN]
    raise ValueError(f"unknown granularity: {granularity!r}")


def build_vocabulary(
    sequences: Iterable[Sequence[str]], granularity: str, max_size: int
) -> Vocabulary:
    """Rank tokens by corpus frequency (ties broken lexicographically) and
    keep the most frequent ones up to max_size, reserved slots included."""
    reserved = reserved_tokens(granularity)
    if max_size < len(reserved):
        raise ValueError(f"max_size {max_size} cannot hold the {len(reserved)} reserved tokens")
    counts: Counter[str] = Counter()
    for seq in sequences:
        counts.update(seq)
    for marker in reserved:
        counts.pop(marker, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = reserved + [t for t, _ in ranked[: max_size - len(reserved)]]
    return Vocabulary(granularity=granularity, tokens=tokens)


def encode(statement: str, vocabulary: Vocabulary, max_len: int) -> tuple[list[int], int]:
    """Map a statement to token ids, truncated to max_len, plus the
    pre-truncation token count.  Encoding never pads."""
    if max_len < 1:
        raise ValueError("max_len must be positive")
    tokens = tokenize(statement, vocabulary.granularity)
    ids = [vocabulary.id_of(t) for t in tokens[:max_len]]
    return ids, len(tokens)


def vocabulary_to_json(vocabulary: Vocabulary) -> str:
    return json.dumps(
        {
            "kind": "sqlsight.vocabulary",
            "format_version": 1,
            "granularity": vocabulary.granularity,
            "tokens": vocabulary.tokens,
        },
        sort_keys=True,
    )


def vocabulary_from_json(text: str) -> Vocabulary:
    data = json.loads(text)
    if data.get("kind") != "sqlsight.vocabulary":
        raise ValueError("not a sqlsight vocabulary")
    return Vocabulary(granularity=data["granularity"], tokens=list(data["tokens"]))


def save_vocabulary(vocabulary: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(vocabulary_to_json(vocabulary) + "\n")


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        return vocabulary_from_json(fh.read())


def vocabulary_sha256(vocabulary: Vocabulary) -> str:
    return hashlib.sha256(vocabulary_to_json(vocabulary).encode("utf-8")).hexdigest()


# --- syntactic profile ---------------------------------------------------------

PROFILE_FIELDS = (
    "n_chars",
    "n_words",
    "n_functions",
    "n_joins",
    "n_unique_tables",
    "n_selected_columns",
    "n_predicates",
    "n_predicate_table_names",
    "nestedness_level",
    "nested_aggregation",
)


@dataclass
class SyntacticProfile:
    n_chars: int = 0
    n_words: int = 0
    n_functions: int = 0
    n_joins: int = 0
    n_unique_tables: int = 0
    n_selected_columns: int = 0
    n_predicates: int = 0
    n_predicate_table_names: int = 0
    nestedness_level: int = 0
    nested_aggregation: bool = False
    parse_failed: bool = False

    def vector(self) -> list[float]:
        return [float(getattr(self, f)) for f in PROFILE_FIELDS]

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in PROFILE_FIELDS}
        out["parse_failed"] = self.parse_failed
        return out


_KEYWORDS = {
    "select", "from", "where", "group", "by", "having", "order", "union",
    "intersect", "except", "all", "distinct", "top", "as", "on", "inner",
    "outer", "left", "right", "full", "cross", "join", "natural", "and",
    "or", "not", "in", "exists", "between", "like", "is", "null", "case",
    "when", "then", "else", "end", "asc", "desc", "limit", "offset",
    "with", "into", "values", "insert", "update", "delete", "set",
    "create", "drop", "alter", "table", "view", "index", "exec",
    "execute", "declare", "begin", "go", "option", "percent", "escape",
    "using", "if", "while", "return",
}

_AGGREGATES = {
    "count", "sum", "avg", "min", "max", "stdev", "stdevp", "stddev",
    "var", "varp", "variance", "string_agg", "group_concat", "total",
}

_CLAUSE_KEYWORDS = {"from", "where", "group", "having", "order"}
_COMPARISONS = {"=", "<", ">", "<=", ">=", "<>", "!="}
_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_@#$")
_NAME_BODY = _NAME_START | set("0123456789")


@dataclass
class _Tok:
    kind: str  # name | num | str | op
    text: str
    quoted: bool = False

    def is_kw(self, *words: str) -> bool:
        return (
            self.kind == "name"
            and not self.quoted
            and "." not in self.text
            and self.text in (words or _KEYWORDS)
        )


def _lex(statement: str) -> list[_Tok]:
    raw: list[_Tok] = []
    i, n = 0, len(statement)
    while i < n:
        ch = statement[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "-" and statement.startswith("--", i):
            j = statement.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if ch == "/" and statement.startswith("/*", i):
            j = statement.find("*/", i + 2)
            i = n if j < 0 else j + 2
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if statement[j] == "'":
                    if j + 1 < n and statement[j + 1] == "'":
                        j += 2
                        continue
                    break
                j += 1
            raw.append(_Tok("str", statement[i + 1 : min(j, n)]))
            i = min(j, n) + 1
            continue
        if ch == '"' or ch == "[":
            close = '"' if ch == '"' else "]"
            j = statement.find(close, i + 1)
            if j < 0:
                j = n
            raw.append(_Tok("name", statement[i + 1 : j].strip().lower(), quoted=True))
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and (statement[j].isdigit() or statement[j] in ".eE+-"):
                # stop a trailing +/- unless it follows an exponent marker
                if statement[j] in "+-" and statement[j - 1] not in "eE":
                    break
                j += 1
            raw.append(_Tok("num", statement[i:j]))
            i = j
            continue
        if ch in _NAME_START:
            j = i
            while j < n and statement[j] in _NAME_BODY:
                j += 1
            raw.append(_Tok("name", statement[i:j].lower()))
            i = j
            continue
        if statement.startswith(("<=", ">=", "<>", "!="), i):
            raw.append(_Tok("op", statement[i : i + 2]))
            i += 2
            continue
        raw.append(_Tok("op", ch))
        i += 1

    # assemble dotted chains: a.b.c as one name, t.* as a qualified star name
    toks: list[_Tok] = []
    i = 0
    while i < len(raw):
        t = raw[i]
        if t.kind == "name":
            parts = [t.text]
            quoted = t.quoted
            j = i + 1
            while j + 1 < len(raw) and raw[j].kind == "op" and raw[j].text == ".":
                nxt = raw[j + 1]
                if nxt.kind == "name":
                    parts.append(nxt.text)
                    quoted = quoted or nxt.quoted
                    j += 2
                    continue
                if nxt.kind == "op" and nxt.text == "*":
                    parts.append("*")
                    j += 2
                break
            toks.append(_Tok("name", ".".join(parts), quoted=quoted))
            i = j
        else:
            toks.append(t)
            i += 1
    return toks


class _Scanner:
    """Single pass over the token stream, tracking clause context per SELECT
    scope.  Counts are intentionally schema-free: a column reference is any
    bare name that is not a keyword, not a function call, and not an alias
    being defined."""

    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.n = len(toks)
        self.found_select = False
        self.n_functions = 0
        self.n_joins = 0
        self.tables: set[str] = set()
        self.n_selected_columns = 0
        self.n_predicates = 0
        self.n_predicate_refs = 0
        self.max_depth = 0
        self.nested_aggregation = False

    def scan(self) -> None:
        i = 0
        while i < self.n:
            if self.toks[i].is_kw("select"):
                i = self._select(i, 0)
            else:
                i += 1

    def _at(self, i: int) -> _Tok | None:
        return self.toks[i] if 0 <= i < self.n else None

    def _select(self, i: int, depth: int) -> int:
        self.found_select = True
        self.max_depth = max(self.max_depth, depth)
        clause = "select"
        in_on = False
        expecting_table = False
        paren = 0
        prev: _Tok | None = self.toks[i]
        i += 1
        while i < self.n:
            t = self.toks[i]

            if t.kind == "op" and t.text == "(":
                nxt = self._at(i + 1)
                if nxt is not None and nxt.is_kw("select"):
                    i = self._select(i + 1, depth + 1)
                    closing = self._at(i)
                    if closing is not None and closing.kind == "op" and closing.text == ")":
                        i += 1
                    if clause == "from":
                        expecting_table = False
                    prev = _Tok("op", ")")
                    continue
                paren += 1
                prev = t
                i += 1
                continue

            if t.kind == "op" and t.text == ")":
                if paren > 0:
                    paren -= 1
                    prev = t
                    i += 1
                    continue
                return i  # closes the scope that opened this select

            if t.kind == "op" and t.text == ";":
                return i

            if paren == 0 and t.kind == "name" and not t.quoted:
                word = t.text
                if word in _CLAUSE_KEYWORDS:
                    clause = word
                    in_on = False
                    expecting_table = word == "from"
                    prev = t
                    i += 1
                    continue
                if word in ("union", "intersect", "except"):
                    clause = "boundary"
                    prev = t
                    i += 1
                    continue
                if word == "select" and clause == "boundary":
                    clause = "select"  # sibling arm of a set operation, same depth
                    prev = t
                    i += 1
                    continue
            if t.kind == "name" and not t.quoted and clause == "from":
                # join plumbing can sit inside parenthesized join trees
                if t.text == "join":
                    self.n_joins += 1
                    in_on = False
                    expecting_table = True
                    prev = t
                    i += 1
                    continue
                if t.text == "on":
                    in_on = True
                    prev = t
                    i += 1
                    continue

            in_predicate = clause in ("where", "having") or (clause == "from" and in_on)

            if in_predicate:
                if t.kind == "op" and t.text in _COMPARISONS:
                    self.n_predicates += 1
                    if t.text == "=" and clause == "where":
                        self._note_implicit_join(i)
                    prev = t
                    i += 1
                    continue
                if t.is_kw("between", "like", "in", "is", "exists"):
                    self.n_predicates += 1
                    prev = t
                    i += 1
                    continue

            if t.kind == "name" and not t.is_kw():
                after = self._at(i + 1)
                is_call = after is not None and after.kind == "op" and after.text == "("
                aliasing = prev is not None and prev.is_kw("as")
                if aliasing:
                    pass  # alias or type name being introduced, not a reference
                elif is_call:
                    self.n_functions += 1
                    base = t.text.rsplit(".", 1)[-1]
                    if depth >= 1 and base in _AGGREGATES:
                        self.nested_aggregation = True
                    if clause == "from":
                        expecting_table = False
                elif in_predicate:
                    self.n_predicate_refs += 1
                elif clause == "from":
                    if expecting_table:
                        self.tables.add(t.text)
                        expecting_table = False
                elif clause == "select":
                    self.n_selected_columns += 1
                prev = t
                i += 1
                continue

            if t.kind == "op" and t.text == ",":
                if clause == "from" and paren == 0:
                    expecting_table = True
                    in_on = False
                prev = t
                i += 1
                continue

            if t.kind == "op" and t.text == "*" and clause == "select":
                # a star is a projection unless it sits between two operands
                if prev is None or (prev.kind == "op" and prev.text in "(,") or prev.is_kw():
                    self.n_selected_columns += 1
                prev = t
                i += 1
                continue

            prev = t
            i += 1
        return i

    def _note_implicit_join(self, i: int) -> None:
        left = self._at(i - 1)
        right = self._at(i + 1)
        if (
            left is not None and right is not None
            and left.kind == "name" and right.kind == "name"
            and "." in left.text and "." in right.text
        ):
            lq = left.text.rsplit(".", 1)[0]
            rq = right.text.rsplit(".", 1)[0]
            if lq != rq:
                self.n_joins += 1


def parse_syntactic_profile(statement: str) -> SyntacticProfile:
    """Structural counts for one statement.  Never raises: statements with
    no recognizable SELECT come back with zeroed structure and parse_failed
    set, while the text-length counts are always filled in."""
    profile = SyntacticProfile(n_chars=len(statement))
    try:
        profile.n_words = len(tokenize_words(statement))
    except ValueError:
        profile.n_words = 0
    try:
        scanner = _Scanner(_lex(statement))
        scanner.scan()
        parsed = scanner.found_select
    except Exception:
        parsed = False
        scanner = None
    if not parsed or scanner is None:
        profile.parse_failed = True
        return profile
    profile.n_functions = scanner.n_functions
    profile.n_joins = scanner.n_joins
    profile.n_unique_tables = len(scanner.tables)
    profile.n_selected_columns = scanner.n_selected_columns
    profile.n_predicates = scanner.n_predicates
    profile.n_predicate_table_names = scanner.n_predicate_refs
    profile.nestedness_level = scanner.max_depth
    profile.nested_aggregation = scanner.nested_aggregation
    return profile


def property_correlation_matrix(profiles: Sequence[SyntacticProfile]) -> np.ndarray:
    """Pearson correlations between the ten profile properties.

    Zero-variance properties correlate 0 with everything (and 1 with
    themselves) rather than producing NaNs.
    """
    if len(profiles) < 2:
        raise ValueError("need at least 2 profiles for correlations")
    x = np.array([p.vector() for p in profiles], dtype=np.float64)
    centered = x - x.mean(axis=0)
    sd = centered.std(axis=0)
    k = len(PROFILE_FIELDS)
    out = np.eye(k)
    n = x.shape[0]
    for a in range(k):
        for b in range(a + 1, k):
            if sd[a] > 0 and sd[b] > 0:
                out[a, b] = out[b, a] = float(
                    (centered[:, a] @ centered[:, b]) / (n * sd[a] * sd[b])
                )
    return out
