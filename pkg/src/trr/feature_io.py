"""Binary container for per-layer, frame-level activation maps.

The on-disk layout (extension ``.trrf``) is fixed so that any implementation,
in any language, reproduces it bit for bit:

    magic ``TRRF``            4 bytes
    format version            u16 (currently 1)
    item-id byte length       u16, followed by that many UTF-8 bytes
    layer count               u16
    per layer, in order:
        layer index           u16
        frame count T_frm     u32
        channel count C       u32
        T_frm * C floats      float32, frame-major (frame t contiguous)

All integers and floats are little-endian. There is no padding and no
alignment; a valid file ends exactly after the last layer's payload.

Validity rules enforced by both reader and writer:

* layer indices strictly increasing (hence unique),
* every layer declares the same T_frm, with T_frm >= 1 and C >= 1,
* every float value is finite.

The parser checks declared sizes against the remaining byte count before
touching payload bytes, so corrupt or truncated input raises a
:class:`~trr.errors.FeatureFormatError` subclass and never reads out of
bounds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateIdError,
    FrameCountMismatchError,
    InvalidShapeError,
    LayerOrderError,
    MissingLayerError,
    NonFiniteValueError,
    TrailingDataError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"TRRF"
FORMAT_VERSION = 1

_U16 = struct.Struct("<H")
_LAYER_HEADER = struct.Struct("<HII")


@dataclass(frozen=True, eq=False)
class LayerFeatures:
    """One layer's activations: a (T_frm, C) float32 matrix, frame-major."""

    layer_index: int
    frames: np.ndarray

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise InvalidShapeError(
                f"layer {self.layer_index}: frames must be 2-D, got ndim={frames.ndim}"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def channel_count(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerFeatures):
            return NotImplemented
        return self.layer_index == other.layer_index and np.array_equal(
            self.frames, other.frames
        )


@dataclass(frozen=True, eq=False)
class FeatureMapSet:
    """All cached layers for one audio item."""

    item_id: str
    layers: tuple[LayerFeatures, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def layer_indices(self) -> tuple[int, ...]:
        return tuple(layer.layer_index for layer in self.layers)

    @property
    def frame_count(self) -> int:
        return self.layers[0].frame_count

    @property
    def channel_count(self) -> int:
        return self.layers[0].channel_count

    def layer(self, index: int) -> LayerFeatures:
        for layer in self.layers:
            if layer.layer_index == index:
                return layer
        raise MissingLayerError(
            f"layer {index} not in feature map {self.item_id!r} "
            f"(present: {list(self.layer_indices)})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMapSet):
            return NotImplemented
        return self.item_id == other.item_id and self.layers == other.layers


def validate_feature_map(fm: FeatureMapSet) -> None:
    """Check all container invariants, raising on the first violation."""
    prev_index = -1
    frame_count = None
    for layer in fm.layers:
        idx = layer.layer_index
        if not 0 <= idx <= 0xFFFF:
            raise InvalidShapeError(f"layer index {idx} outside u16 range")
        if idx <= prev_index:
            raise LayerOrderError(
                f"layer index {idx} follows {prev_index}; indices must be "
                "strictly increasing"
            )
        prev_index = idx
        t, c = layer.frames.shape
        if t < 1 or c < 1:
            raise InvalidShapeError(f"layer {idx}: T_frm={t}, C={c}; both must be >= 1")
        if frame_count is None:
            frame_count = t
        elif t != frame_count:
            raise FrameCountMismatchError(
                f"layer {idx} declares T_frm={t}, earlier layers declared {frame_count}"
            )
        if not np.isfinite(layer.frames).all():
            flat = int(np.flatnonzero(~np.isfinite(layer.frames.ravel()))[0])
            raise NonFiniteValueError(f"layer {idx}: non-finite value at flat index {flat}")
    if len(fm.item_id.encode("utf-8")) > 0xFFFF:
        raise InvalidShapeError("item_id longer than 65535 UTF-8 bytes")
    if len(fm.layers) > 0xFFFF:
        raise InvalidShapeError("more than 65535 layers")


def feature_map_to_bytes(fm: FeatureMapSet) -> bytes:
    """Serialize a validated feature map to the container byte layout.

    Validation runs first, so nothing is emitted for an invalid input.
    """
    validate_feature_map(fm)
    item_id = fm.item_id.encode("utf-8")
    parts = [
        MAGIC,
        _U16.pack(FORMAT_VERSION),
        _U16.pack(len(item_id)),
        item_id,
        _U16.pack(len(fm.layers)),
    ]
    for layer in fm.layers:
        t, c = layer.frames.shape
        parts.append(_LAYER_HEADER.pack(layer.layer_index, t, c))
        parts.append(layer.frames.astype("<f4", copy=False).tobytes(order="C"))
    return b"".join(parts)


def feature_map_from_bytes(data: bytes) -> FeatureMapSet:
    """Parse the container byte layout, validating every invariant."""
    view = memoryview(data)
    offset = 0

    def need(n: int, what: str):
        nonlocal offset
        if offset + n > len(view):
            raise TruncatedPayloadError(
                f"{what} at offset {offset}: need {n} bytes, "
                f"{len(view) - offset} remain"
            )
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(need(4, "magic")) != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r} at offset 0")
    (version,) = _U16.unpack(need(2, "version"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"version {version} at offset 4; reader supports {FORMAT_VERSION}")
    (id_len,) = _U16.unpack(need(2, "item-id length"))
    try:
        item_id = bytes(need(id_len, "item id")).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadMagicError(f"item id at offset 8 is not valid UTF-8: {exc}") from None
    (layer_count,) = _U16.unpack(need(2, "layer count"))

    layers = []
    prev_index = -1
    frame_count = None
    for i in range(layer_count):
        header_off = offset
        idx, t, c = _LAYER_HEADER.unpack(need(_LAYER_HEADER.size, f"layer {i} header"))
        if idx <= prev_index:
            raise LayerOrderError(
                f"layer header at offset {header_off}: index {idx} follows {prev_index}"
            )
        prev_index = idx
        if t < 1 or c < 1:
            raise InvalidShapeError(
                f"layer {idx} at offset {header_off}: T_frm={t}, C={c}; both must be >= 1"
            )
        if frame_count is None:
            frame_count = t
        elif t != frame_count:
            raise FrameCountMismatchError(
                f"layer {idx} at offset {header_off}: T_frm={t}, "
                f"earlier layers declared {frame_count}"
            )
        payload = need(4 * t * c, f"layer {idx} payload")
        frames = np.frombuffer(payload, dtype="<f4").reshape(t, c)
        if not np.isfinite(frames).all():
            flat = int(np.flatnonzero(~np.isfinite(frames.ravel()))[0])
            raise NonFiniteValueError(
                f"layer {idx}: non-finite value at flat index {flat} "
                f"(offset {header_off + _LAYER_HEADER.size + 4 * flat})"
            )
        layers.append(LayerFeatures(idx, frames.copy()))

    if offset != len(view):
        raise TrailingDataError(
            f"{len(view) - offset} unexpected bytes after declared payload at offset {offset}"
        )
    return FeatureMapSet(item_id=item_id, layers=tuple(layers))


def read_feature_file(path: Union[str, Path]) -> FeatureMapSet:
    """Read and validate one ``.trrf`` file."""
    return feature_map_from_bytes(Path(path).read_bytes())


def write_feature_file(fm: FeatureMapSet, path: Union[str, Path]) -> None:
    """Write ``fm`` to ``path`` in the container layout.

    Serialization is deterministic: equal inputs produce byte-equal files.
    Invalid inputs raise before the file is opened.
    """
    data = feature_map_to_bytes(fm)
    Path(path).write_bytes(data)


def read_feature_dir(path: Union[str, Path], pattern: str = "*.trrf") -> dict[str, FeatureMapSet]:
    """Read every feature file under ``path``, keyed by embedded item id.

    Files are visited in sorted name order; duplicate item ids raise.
    """
    out: dict[str, FeatureMapSet] = {}
    for file in sorted(Path(path).glob(pattern)):
        fm = read_feature_file(file)
        if fm.item_id in out:
            raise DuplicateIdError(f"item id {fm.item_id!r} appears in more than one file")
        out[fm.item_id] = fm
    return out


def make_feature_map(item_id: str, layer_frames: dict[int, "np.ndarray"]) -> FeatureMapSet:
    """Convenience constructor from a {layer_index: (T, C) array} mapping."""
    layers = tuple(
        LayerFeatures(idx, np.asarray(frames)) for idx, frames in sorted(layer_frames.items())
    )
    return FeatureMapSet(item_id=item_id, layers=layers)


def iter_layer_arrays(fm: FeatureMapSet) -> Iterable[tuple[int, np.ndarray]]:
    for layer in fm.layers:
        yield layer.layer_index, layer.frames
