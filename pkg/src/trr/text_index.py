"""Sparse lexical scoring over preset metadata.

Tokenization: Unicode-lowercase the text, split on runs of non-alphanumeric
characters, drop empties. The index covers the ``Style`` and ``Feature``
fields only. Scores are TF-IDF-weighted cosines with
``idf = ln((N + 1) / (df + 1)) + 1``; all weights are non-negative, so scores
live in [0, 1].
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyCorpusError, UnknownIdError
from .knowledge_base import PresetRecord

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class LexicalIndex:
    record_ids: tuple[str, ...]
    token_counts: dict[str, Counter]          # record_id -> token multiset
    doc_freq: Counter                         # token -> number of docs containing it
    n_docs: int
    _doc_weights: dict[str, dict[str, float]]  # record_id -> token -> tf*idf
    _doc_norms: dict[str, float]

    def idf(self, token: str) -> float:
        return math.log((self.n_docs + 1) / (self.doc_freq.get(token, 0) + 1)) + 1.0


def build_text_index(records: Sequence[PresetRecord]) -> LexicalIndex:
    """Index Style + Feature tokens of every record."""
    if not records:
        raise EmptyCorpusError("cannot index an empty record list")
    token_counts: dict[str, Counter] = {}
    doc_freq: Counter = Counter()
    for record in records:
        counts = Counter(tokenize(f"{record.style} {record.feature_text}"))
        token_counts[record.record_id] = counts
        doc_freq.update(counts.keys())
    n_docs = len(records)

    def idf(token: str) -> float:
        return math.log((n_docs + 1) / (doc_freq[token] + 1)) + 1.0

    doc_weights: dict[str, dict[str, float]] = {}
    doc_norms: dict[str, float] = {}
    for rid, counts in token_counts.items():
        weights = {tok: tf * idf(tok) for tok, tf in counts.items()}
        doc_weights[rid] = weights
        doc_norms[rid] = math.sqrt(sum(w * w for w in weights.values()))
    return LexicalIndex(
        record_ids=tuple(sorted(token_counts)),
        token_counts=token_counts,
        doc_freq=doc_freq,
        n_docs=n_docs,
        _doc_weights=doc_weights,
        _doc_norms=doc_norms,
    )


def _query_weights(index: LexicalIndex, query: str) -> tuple[dict[str, float], float]:
    counts = Counter(tokenize(query))
    weights = {tok: tf * index.idf(tok) for tok, tf in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return weights, norm


def score_all(index: LexicalIndex, query: str) -> dict[str, float]:
    """TF-IDF cosine of the query against every indexed record."""
    q_weights, q_norm = _query_weights(index, query)
    scores = {rid: 0.0 for rid in index.record_ids}
    if q_norm == 0.0:
        return scores
    for rid in index.record_ids:
        d_weights = index._doc_weights[rid]
        d_norm = index._doc_norms[rid]
        if d_norm == 0.0:
            continue
        dot = sum(w * d_weights[tok] for tok, w in q_weights.items() if tok in d_weights)
        scores[rid] = dot / (q_norm * d_norm)
    return scores


def text_score(index: LexicalIndex, query: str, record_id: str) -> float:
    """Cosine score of one record for a query, in [0, 1]."""
    if record_id not in index._doc_weights:
        raise UnknownIdError(f"record id {record_id!r} not in the lexical index")
    q_weights, q_norm = _query_weights(index, query)
    d_weights = index._doc_weights[record_id]
    d_norm = index._doc_norms[record_id]
    if q_norm == 0.0 or d_norm == 0.0:
        return 0.0
    dot = sum(w * d_weights[tok] for tok, w in q_weights.items() if tok in d_weights)
    return dot / (q_norm * d_norm)


def text_confidence(index: LexicalIndex, query: str) -> float:
    """Best score over the corpus; the fusion gate's vagueness signal."""
    scores = score_all(index, query)
    return max(scores.values(), default=0.0)
