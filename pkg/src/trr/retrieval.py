"""Top-K cosine retrieval and quality-aware multimodal score fusion.

An :class:`EmbeddingIndex` holds unit-norm vectors keyed by record id; queries
are exhaustive cosine scans (exact, and fast at knowledge-base scale ~10^3).
Ties are always broken by ascending record id, so rankings are deterministic.

Fusion combines a lexical text score with an audio cosine score:

    s_fused = w_text * s_text + w_audio * s_audio,   w_text + w_audio = 1

with the audio cosine mapped from [-1, 1] to [0, 1] via (c + 1) / 2 so both
modalities share a scale. Weights pass through two quality gates before use:

* text gate: query text absent, or best lexical score below
  ``vague_threshold``  ->  (w_text, w_audio) = (0, 1);
* audio gate: query vector absent, or its norm below
  ``audio_norm_threshold``  ->  (w_text, w_audio) = (1, 0);
* both gates fired -> :class:`BothModalitiesDegradedError`.

With a gate fired the ranking is exactly the surviving modality's own
ranking, which is the deterministic missing-modality fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    BothModalitiesDegradedError,
    DimensionMismatchError,
    EmptyIndexError,
    ZeroQueryError,
    ZeroVectorError,
)
from .text_index import LexicalIndex, score_all, text_confidence


@dataclass(frozen=True)
class EmbeddingIndex:
    """Unit-norm vectors for one embedding source, ids in ascending order."""

    source_name: str
    dimension: int
    ids: tuple[str, ...]
    matrix: np.ndarray  # (n, dimension) float64, rows unit-norm

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, record_id: str) -> np.ndarray:
        return self.matrix[self.ids.index(record_id)]


def build_embedding_index(source_name: str, entries: Mapping[str, np.ndarray]) -> EmbeddingIndex:
    """Build an index from {record_id: vector}, L2-normalizing every row.

    Cached external vectors are not guaranteed unit-norm; normalizing here
    leaves cosine rankings unchanged and establishes the index invariant.
    """
    if not entries:
        raise EmptyIndexError(f"no entries for embedding source {source_name!r}")
    ids = tuple(sorted(entries))
    first = np.asarray(entries[ids[0]], dtype=np.float64).ravel()
    dim = first.shape[0]
    matrix = np.empty((len(ids), dim), dtype=np.float64)
    for row, rid in enumerate(ids):
        vec = np.asarray(entries[rid], dtype=np.float64).ravel()
        if vec.shape[0] != dim:
            raise DimensionMismatchError(
                f"{source_name!r}: vector for {rid!r} has dim {vec.shape[0]}, expected {dim}"
            )
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ZeroVectorError(f"{source_name!r}: zero vector for {rid!r}")
        matrix[row] = vec / norm
    return EmbeddingIndex(source_name=source_name, dimension=dim, ids=ids, matrix=matrix)


@dataclass(frozen=True)
class FusionConfig:
    """Fusion weights and gate thresholds.

    Defaults: equal weights, ``vague_threshold`` 0.05 and
    ``audio_norm_threshold`` 1e-3 (both configurable; every report should echo
    the values used).
    """

    w_text: float = 0.5
    w_audio: float = 0.5
    vague_threshold: float = 0.05
    audio_norm_threshold: float = 1e-3

    def __post_init__(self):
        if self.w_text < 0 or self.w_audio < 0:
            raise ValueError("fusion weights must be non-negative")
        if abs(self.w_text + self.w_audio - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {self.w_text} + {self.w_audio}")


@dataclass(frozen=True)
class RankedResult:
    """Scores in non-increasing order, ties broken by ascending record id."""

    items: tuple[tuple[str, float], ...]
    effective_weights: Optional[tuple[float, float]] = None  # (w_text, w_audio)

    @property
    def top_id(self) -> str:
        return self.items[0][0]

    def ids(self) -> list[str]:
        return [rid for rid, _ in self.items]


def _rank(ids: Sequence[str], scores: np.ndarray, k: int,
          weights: Optional[tuple[float, float]]) -> RankedResult:
    # ids are pre-sorted ascending, so a stable sort on -score breaks ties
    # by ascending record id.
    order = np.argsort(-scores, kind="stable")[:k]
    items = tuple((ids[i], float(scores[i])) for i in order)
    return RankedResult(items=items, effective_weights=weights)


def cosine_top_k(index: EmbeddingIndex, query_vec: np.ndarray, k: int) -> RankedResult:
    """The k entries with the highest cosine against the query."""
    if len(index) == 0:
        raise EmptyIndexError(f"index {index.source_name!r} is empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(query_vec, dtype=np.float64).ravel()
    if q.shape[0] != index.dimension:
        raise DimensionMismatchError(
            f"query dim {q.shape[0]} != index dim {index.dimension}"
        )
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ZeroQueryError("query vector has zero norm")
    scores = index.matrix @ (q / norm)
    return _rank(index.ids, scores, k, None)


def fused_top_k(
    text_index: LexicalIndex,
    audio_index: EmbeddingIndex,
    query_text: Optional[str],
    query_vec: Optional[np.ndarray],
    cfg: FusionConfig,
    k: int,
) -> RankedResult:
    """Rank by the fused score after applying the quality gates.

    Returns the effective (w_text, w_audio) actually applied. Scores are on
    the fused [0, 1] scale in every branch (audio cosines mapped via
    (c + 1) / 2), so single-gate rankings match the surviving modality's own
    ordering exactly.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    text_degraded = query_text is None or text_confidence(text_index, query_text) < cfg.vague_threshold
    audio_degraded = (
        query_vec is None
        or float(np.linalg.norm(np.asarray(query_vec, dtype=np.float64))) < cfg.audio_norm_threshold
    )
    if text_degraded and audio_degraded:
        raise BothModalitiesDegradedError(
            "text query vague or absent and audio embedding degraded or absent"
        )

    if text_degraded:
        weights = (0.0, 1.0)
    elif audio_degraded:
        weights = (1.0, 0.0)
    else:
        weights = (cfg.w_text, cfg.w_audio)
    w_text, w_audio = weights

    if w_audio == 0.0:
        text_scores = score_all(text_index, query_text)
        ids = tuple(sorted(text_scores))
        if not ids:
            raise EmptyIndexError("lexical index is empty")
        scores = np.array([w_text * text_scores[rid] for rid in ids])
        return _rank(ids, scores, k, weights)

    if len(audio_index) == 0:
        raise EmptyIndexError(f"index {audio_index.source_name!r} is empty")
    q = np.asarray(query_vec, dtype=np.float64).ravel()
    if q.shape[0] != audio_index.dimension:
        raise DimensionMismatchError(
            f"query dim {q.shape[0]} != index dim {audio_index.dimension}"
        )
    cosines = audio_index.matrix @ (q / np.linalg.norm(q))
    audio_scores = (cosines + 1.0) / 2.0

    if w_text == 0.0:
        return _rank(audio_index.ids, w_audio * audio_scores, k, weights)

    text_scores = score_all(text_index, query_text)
    ids = tuple(rid for rid in audio_index.ids if rid in text_scores)
    if not ids:
        raise EmptyIndexError("no record ids shared between text and audio indices")
    pos = {rid: i for i, rid in enumerate(audio_index.ids)}
    fused = np.array(
        [w_text * text_scores[rid] + w_audio * audio_scores[pos[rid]] for rid in ids]
    )
    return _rank(ids, fused, k, weights)
