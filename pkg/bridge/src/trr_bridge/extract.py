"""Frame-level activation extraction from audio files.

Pipeline per file: decode (WAV via scipy), downmix to mono, peak-normalize,
resample to 16 kHz, zero-pad to a minimum duration, run the frozen backbone
in eval mode, and serialize the selected layers' hidden states (channel
count 768 for Wav2Vec2 Base) into the ``.trrf`` container.

Layer indices are 0-based transformer layers: layer 4 is the fifth
transformer block, layer 11 is the final one of the 12-layer Base model.

Reproducibility: inference runs single-threaded under ``torch.no_grad`` with
a frozen model in eval mode, so extracting the same file twice produces
byte-identical output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy.io.wavfile
import scipy.signal
import torch


class BridgeError(Exception):
    pass


class UndecodableAudioError(BridgeError):
    """The input file could not be decoded as audio."""


class LayerOutOfRangeError(BridgeError):
    """A requested layer index exceeds the backbone depth."""


DEFAULT_LAYERS = (4, 5, 6, 11)  # texture layers plus the final layer


@dataclass(frozen=True)
class ExtractionConfig:
    """Knobs for the extraction pipeline.

    ``model`` names a pretrained checkpoint; with ``random_weights`` set the
    backbone is instead randomly initialized from the Base architecture with
    ``init_seed`` (useful offline and for tests: same seed, same weights).
    """

    model: str = "facebook/wav2vec2-base"
    layers: tuple[int, ...] = DEFAULT_LAYERS
    sample_rate: int = 16_000
    peak_target: float = 0.95
    min_seconds: float = 1.0
    random_weights: bool = False
    init_seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("layer set must be non-empty")
        if any(l < 0 for l in self.layers):
            raise LayerOutOfRangeError(f"negative layer index in {self.layers}")


def load_backbone(cfg: ExtractionConfig):
    """Load (or randomly initialize) the frozen backbone in eval mode."""
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    if cfg.random_weights:
        torch.manual_seed(cfg.init_seed)
        model = Wav2Vec2Model(Wav2Vec2Config())
    else:
        model = Wav2Vec2Model.from_pretrained(cfg.model)
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    depth = model.config.num_hidden_layers
    too_deep = [l for l in cfg.layers if l >= depth]
    if too_deep:
        raise LayerOutOfRangeError(
            f"layers {too_deep} out of range for a {depth}-layer backbone"
        )
    return model


def _decode_wav(path: Path) -> tuple[int, np.ndarray]:
    try:
        rate, samples = scipy.io.wavfile.read(path)
    except Exception as exc:
        raise UndecodableAudioError(f"{path}: {exc}") from None
    samples = np.asarray(samples)
    if samples.size == 0:
        raise UndecodableAudioError(f"{path}: empty audio stream")
    if samples.dtype.kind == "i":
        samples = samples.astype(np.float64) / float(np.iinfo(samples.dtype).max)
    elif samples.dtype.kind == "u":
        info = np.iinfo(samples.dtype)
        samples = (samples.astype(np.float64) - (info.max + 1) / 2) / ((info.max + 1) / 2)
    else:
        samples = samples.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return int(rate), samples


def preprocess(path: Union[str, Path], cfg: ExtractionConfig) -> np.ndarray:
    """Decode, downmix, peak-normalize, resample and zero-pad one file."""
    rate, samples = _decode_wav(Path(path))
    peak = np.abs(samples).max()
    if peak > 0:
        samples = samples * (cfg.peak_target / peak)
    if rate != cfg.sample_rate:
        g = np.gcd(rate, cfg.sample_rate)
        samples = scipy.signal.resample_poly(samples, cfg.sample_rate // g, rate // g)
    min_samples = int(round(cfg.min_seconds * cfg.sample_rate))
    if samples.size < min_samples:
        samples = np.pad(samples, (0, min_samples - samples.size))
    return samples.astype(np.float32)


def extract(path: Union[str, Path], cfg: ExtractionConfig, model=None) -> dict[int, np.ndarray]:
    """Run the backbone on one file; returns {layer_index: (T, C) float32}.

    ``model`` may be passed to amortize loading over many files.
    """
    if model is None:
        model = load_backbone(cfg)
    waveform = preprocess(path, cfg)
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        with torch.no_grad():
            out = model(torch.from_numpy(waveform)[None, :], output_hidden_states=True)
    finally:
        torch.set_num_threads(n_threads)
    hidden = out.hidden_states  # [embeddings, layer 0 output, ..., layer N-1 output]
    layers = {}
    for idx in sorted(set(cfg.layers)):
        if idx + 1 >= len(hidden):
            raise LayerOutOfRangeError(f"layer {idx} beyond backbone depth {len(hidden) - 1}")
        layers[idx] = hidden[idx + 1][0].numpy().astype(np.float32)
    return layers


# ---------------------------------------------------------------------------
# .trrf serialization (the artifact's documented byte layout)
# ---------------------------------------------------------------------------

_MAGIC = b"TRRF"
_VERSION = 1


def serialize_feature_map(item_id: str, layers: dict[int, np.ndarray]) -> bytes:
    """Emit the container: magic, version u16, id, layer count u16, then per
    layer u16 index / u32 T / u32 C and float32 frame-major payload, all
    little-endian with no padding."""
    if not layers:
        raise ValueError("no layers to serialize")
    shapes = {arr.shape[0] for arr in layers.values()}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent frame counts across layers: {sorted(shapes)}")
    for idx, arr in layers.items():
        if not np.isfinite(arr).all():
            raise ValueError(f"layer {idx}: non-finite activation")
    encoded_id = item_id.encode("utf-8")
    parts = [
        _MAGIC,
        struct.pack("<H", _VERSION),
        struct.pack("<H", len(encoded_id)),
        encoded_id,
        struct.pack("<H", len(layers)),
    ]
    for idx in sorted(layers):
        arr = np.ascontiguousarray(layers[idx], dtype=np.float32)
        t, c = arr.shape
        parts.append(struct.pack("<HII", idx, t, c))
        parts.append(arr.astype("<f4", copy=False).tobytes(order="C"))
    return b"".join(parts)


def extract_to_file(
    audio_path: Union[str, Path],
    out_path: Union[str, Path],
    cfg: ExtractionConfig,
    model=None,
    item_id: str | None = None,
) -> Path:
    """Extract one audio file and write the ``.trrf`` container."""
    audio_path = Path(audio_path)
    layers = extract(audio_path, cfg, model=model)
    data = serialize_feature_map(item_id or audio_path.stem, layers)
    out_path = Path(out_path)
    out_path.write_bytes(data)
    return out_path
