"""Texture embeddings from cached feature maps.

The texture encoder turns a per-layer activation map into a single unit-norm
vector of second-order statistics:

1. project each frame through a frozen linear map ``P`` (``H_hat = H @ P.T``),
2. form the time-averaged Gram matrix ``G = H_hat.T @ H_hat / T`` per layer,
3. average the Gram matrices over the selected layer set,
4. flatten row-major and L2-normalize.

Because the Gram matrix sums over frames, the embedding is invariant to frame
permutation and, after normalization, to global feature scaling. The
mean-pooled baseline (per-channel mean over frames, L2-normalized) is provided
alongside for comparison: it sees first-order channel statistics only and
cannot distinguish items whose channels co-vary differently but share means.

Projections come in two flavours:

* frozen random, Xavier-uniform entries from a seeded PCG64 generator
  (``numpy.random.default_rng``), so the same ``(seed, dims)`` reproduces the
  same matrix on any platform;
* PCA, rows = leading principal directions of pooled, mean-centered frames.

Projection matrices are stored row-per-output-dimension and applied as
``H @ P.T``; the ``.trrp`` sidecar serializes exactly that layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    InsufficientFramesError,
    MissingLayerError,
    TrailingDataError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ZeroGramError,
)
from .feature_io import FeatureMapSet

DEFAULT_LAYERS = (4, 5, 6)
DEFAULT_OUTPUT_DIM = 32

PROJECTION_MAGIC = b"TRRP"
PROJECTION_VERSION = 1
_KIND_CODES = {"random": 0, "pca": 1}
_KIND_NAMES = {code: name for name, code in _KIND_CODES.items()}


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """A frozen linear map stored as a (output_dim, input_dim) matrix."""

    kind: str
    input_dim: int
    output_dim: int
    seed: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown projection kind {self.kind!r}")
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if matrix.shape != (self.output_dim, self.input_dim):
            raise DimensionMismatchError(
                f"projection matrix shape {matrix.shape} != "
                f"({self.output_dim}, {self.input_dim})"
            )
        object.__setattr__(self, "matrix", matrix)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjectionSpec):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.input_dim == other.input_dim
            and self.output_dim == other.output_dim
            and self.seed == other.seed
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True, eq=False)
class TextureEmbedding:
    """Unit-norm flattened averaged Gram matrix (length output_dim**2)."""

    values: np.ndarray
    source_layers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "source_layers", tuple(self.source_layers))

    @property
    def gram_dim(self) -> int:
        return int(round(len(self.values) ** 0.5))

    def as_matrix(self) -> np.ndarray:
        d = self.gram_dim
        return self.values.reshape(d, d)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TextureEmbedding):
            return NotImplemented
        return self.source_layers == other.source_layers and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, eq=False)
class PooledEmbedding:
    """L2-normalized per-channel mean of one layer's frames."""

    values: np.ndarray
    layer_index: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PooledEmbedding):
            return NotImplemented
        return self.layer_index == other.layer_index and np.array_equal(
            self.values, other.values
        )


def make_random_projection(input_dim: int, output_dim: int, seed: int) -> ProjectionSpec:
    """Create a frozen Xavier-uniform random projection.

    Entries are drawn i.i.d. uniform on ``[-a, a]`` with
    ``a = sqrt(6 / (input_dim + output_dim))`` from a PCG64 generator seeded
    with ``seed``, filling the (output_dim, input_dim) matrix row-major. The
    same arguments always produce the same matrix, on any platform.
    """
    if input_dim < 1 or output_dim < 1:
        raise ValueError("projection dimensions must be >= 1")
    bound = np.sqrt(6.0 / (input_dim + output_dim))
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-bound, bound, size=(output_dim, input_dim))
    return ProjectionSpec(
        kind="random",
        input_dim=input_dim,
        output_dim=output_dim,
        seed=seed,
        matrix=matrix.astype(np.float32),
    )


def fit_pca_projection(
    feature_maps: Iterable[FeatureMapSet],
    layers: Sequence[int] = DEFAULT_LAYERS,
    output_dim: int = DEFAULT_OUTPUT_DIM,
) -> ProjectionSpec:
    """Fit a PCA projection on pooled frames from the selected layers.

    Frames from every feature map's selected layers are stacked, mean-centered
    and decomposed; the projection rows are the top ``output_dim`` principal
    directions ordered by descending eigenvalue. Row signs are fixed so the
    entry of largest magnitude in each row is positive, making the fit
    deterministic.
    """
    layer_list = sorted(set(int(x) for x in layers))
    blocks = []
    input_dim = None
    for fm in feature_maps:
        for idx in layer_list:
            frames = fm.layer(idx).frames
            if input_dim is None:
                input_dim = frames.shape[1]
            elif frames.shape[1] != input_dim:
                raise DimensionMismatchError(
                    f"feature map {fm.item_id!r} layer {idx} has C={frames.shape[1]}, "
                    f"expected {input_dim}"
                )
            blocks.append(frames.astype(np.float64))
    if not blocks:
        raise InsufficientFramesError("no frames supplied")
    pooled = np.concatenate(blocks, axis=0)
    if pooled.shape[0] < output_dim:
        raise InsufficientFramesError(
            f"{pooled.shape[0]} frames < output_dim {output_dim}"
        )
    centered = pooled - pooled.mean(axis=0, keepdims=True)
    # Right singular vectors of the centered data = eigenvectors of the
    # sample covariance, with singular values in descending order.
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    rows = vt[:output_dim]
    signs = np.sign(rows[np.arange(rows.shape[0]), np.argmax(np.abs(rows), axis=1)])
    signs[signs == 0] = 1.0
    rows = rows * signs[:, None]
    return ProjectionSpec(
        kind="pca",
        input_dim=int(input_dim),
        output_dim=output_dim,
        seed=0,
        matrix=rows.astype(np.float32),
    )


def trr_encode(
    fm: FeatureMapSet,
    proj: ProjectionSpec,
    layers: Sequence[int] = DEFAULT_LAYERS,
) -> TextureEmbedding:
    """Encode a feature map into a unit-norm texture embedding.

    For each selected layer ``H`` (T x C): ``H_hat = H @ P.T`` (T x D), then
    ``G = H_hat.T @ H_hat / T`` (D x D). The per-layer Gram matrices are
    averaged, flattened row-major, and L2-normalized.

    Raises
    ------
    MissingLayerError
        if a selected layer is absent from ``fm``.
    DimensionMismatchError
        if the feature channel count differs from ``proj.input_dim``.
    ZeroGramError
        if the averaged Gram matrix is identically zero (all-zero features,
        e.g. digital silence); callers may treat this as "audio modality
        absent".
    """
    layer_list = sorted(set(int(x) for x in layers))
    if not layer_list:
        raise MissingLayerError("empty layer set")
    p = proj.matrix.astype(np.float64)
    gram_sum = np.zeros((proj.output_dim, proj.output_dim), dtype=np.float64)
    for idx in layer_list:
        frames = fm.layer(idx).frames
        if frames.shape[1] != proj.input_dim:
            raise DimensionMismatchError(
                f"layer {idx} has C={frames.shape[1]}, projection expects "
                f"{proj.input_dim}"
            )
        projected = frames.astype(np.float64) @ p.T
        gram_sum += projected.T @ projected / projected.shape[0]
    gram = gram_sum / len(layer_list)
    flat = gram.reshape(-1)
    norm = np.linalg.norm(flat)
    if norm == 0.0:
        raise ZeroGramError(f"all-zero Gram matrix for item {fm.item_id!r}")
    return TextureEmbedding(values=flat / norm, source_layers=tuple(layer_list))


def mean_pool_encode(fm: FeatureMapSet, layer: int) -> PooledEmbedding:
    """Per-channel mean over frames of one layer, L2-normalized.

    Normalization standardizes stored vectors; it does not change cosine
    rankings. An all-zero layer raises :class:`ZeroGramError`, mirroring the
    texture encoder's degenerate case.
    """
    frames = fm.layer(layer).frames.astype(np.float64)
    pooled = frames.mean(axis=0)
    norm = np.linalg.norm(pooled)
    if norm == 0.0:
        raise ZeroGramError(f"all-zero pooled vector for item {fm.item_id!r}")
    return PooledEmbedding(values=pooled / norm, layer_index=layer)


# ---------------------------------------------------------------------------
# Projection sidecar (.trrp)
# ---------------------------------------------------------------------------

_PROJ_HEADER = struct.Struct("<HBIIQ")  # version, kind, input_dim, output_dim, seed


def projection_to_bytes(proj: ProjectionSpec) -> bytes:
    """Serialize a projection: magic, header, then D*C float32 row-major."""
    header = _PROJ_HEADER.pack(
        PROJECTION_VERSION,
        _KIND_CODES[proj.kind],
        proj.input_dim,
        proj.output_dim,
        proj.seed,
    )
    return PROJECTION_MAGIC + header + proj.matrix.astype("<f4", copy=False).tobytes(order="C")


def projection_from_bytes(data: bytes) -> ProjectionSpec:
    if data[:4] != PROJECTION_MAGIC:
        raise BadMagicError(f"expected {PROJECTION_MAGIC!r} at offset 0")
    if len(data) < 4 + _PROJ_HEADER.size:
        raise TruncatedPayloadError("projection header truncated")
    version, kind_code, input_dim, output_dim, seed = _PROJ_HEADER.unpack_from(data, 4)
    if version != PROJECTION_VERSION:
        raise UnsupportedVersionError(f"projection version {version}")
    if kind_code not in _KIND_NAMES:
        raise BadMagicError(f"unknown projection kind code {kind_code}")
    body = data[4 + _PROJ_HEADER.size :]
    expected = 4 * input_dim * output_dim
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"projection payload: need {expected} bytes, have {len(body)}"
        )
    if len(body) > expected:
        raise TrailingDataError(f"{len(body) - expected} unexpected trailing bytes")
    matrix = np.frombuffer(body, dtype="<f4").reshape(output_dim, input_dim).copy()
    return ProjectionSpec(
        kind=_KIND_NAMES[kind_code],
        input_dim=input_dim,
        output_dim=output_dim,
        seed=seed,
        matrix=matrix,
    )


def write_projection(proj: ProjectionSpec, path: Union[str, Path]) -> None:
    Path(path).write_bytes(projection_to_bytes(proj))


def read_projection(path: Union[str, Path]) -> ProjectionSpec:
    return projection_from_bytes(Path(path).read_bytes())
