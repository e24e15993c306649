"""Seeded synthetic corpora for tests, demos and profiling.

The texture corpus builds two classes of items whose feature maps share
identical per-channel means but differ in cross-channel correlation: class 0
channels all co-vary, class 1's second channel half anti-varies against the
first. Mean pooling sees the (identical) means only, so pooled embeddings of
all items are indistinguishable, while Gram-based texture embeddings separate
the classes. Preset parameters and style text are class-coherent so retrieval
quality is measurable in parameter space.

Construction per item (channels C, frames T):

    frames[t] = mean_level + amplitude * s[t] * u_class + noise[t]

with ``s`` a zero-sum modulation series, ``u_class`` the co/anti-variation
sign pattern, and ``noise`` centered per channel. Centering makes every
item's per-channel mean exactly ``mean_level``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_io import FeatureMapSet, LayerFeatures
from .knowledge_base import ParamRanges, PresetRecord, SplitSpec

DEFAULT_SYNTH_LAYERS = (4, 5, 6)

_CLASS_STYLES = (
    "mellow tremolo shimmer",
    "tight scooped chug",
)
_CLASS_FEATURES = (
    "slow modulation wide stereo wash",
    "fast percussive palm muted attack",
)


@dataclass(frozen=True)
class SyntheticCorpus:
    records: list[PresetRecord]
    feature_maps: dict[str, FeatureMapSet]
    classes: dict[str, int]
    split: SplitSpec
    ranges: ParamRanges

    @property
    def kb_records(self) -> list[PresetRecord]:
        kb = set(self.split.kb_ids)
        return [r for r in self.records if r.record_id in kb]

    @property
    def query_records(self) -> list[PresetRecord]:
        test = set(self.split.test_ids)
        return [r for r in self.records if r.record_id in test]


def _texture_frames(
    rng: np.random.Generator,
    n_frames: int,
    channels: int,
    item_class: int,
    mean_level: float,
    amplitude: float,
    noise: float,
) -> np.ndarray:
    pattern = np.ones(channels)
    if item_class == 1:
        pattern[channels // 2 :] = -1.0
    s = rng.normal(size=n_frames)
    s -= s.mean()
    eps = rng.normal(scale=noise, size=(n_frames, channels))
    eps -= eps.mean(axis=0, keepdims=True)
    frames = mean_level + amplitude * np.outer(s, pattern) + eps
    return frames.astype(np.float32)


def _class_parameters(rng: np.random.Generator, item_class: int, jitter: float) -> dict:
    # Classes sit far apart in parameter space so retrieving the wrong class
    # shows up as a large L2 error.
    def j() -> float:
        return float(rng.uniform(-jitter, jitter))

    if item_class == 0:
        return {
            "TremoloOn": {"Rate": 2.0 + j(), "Depth": 0.7 + j()},
            "ReverbOn": {"Mix": 0.4 + j(), "Decay": 3.0 + j()},
            "Gain": 0.3 + j(),
        }
    return {
        "DriveOn": {"Distortion": 8.0 + j(), "Tone": 6.0 + j()},
        "GateOn": {"Threshold": -40.0 + j()},
        "Gain": 7.0 + j(),
    }


def default_synth_ranges() -> ParamRanges:
    return ParamRanges(
        {
            "TremoloOn.Rate": (0.0, 10.0),
            "TremoloOn.Depth": (0.0, 1.0),
            "ReverbOn.Mix": (0.0, 1.0),
            "ReverbOn.Decay": (0.0, 10.0),
            "DriveOn.Distortion": (0.0, 10.0),
            "DriveOn.Tone": (0.0, 10.0),
            "GateOn.Threshold": (-80.0, 0.0),
            "Gain": (0.0, 10.0),
        },
        default=(0.0, 10.0),
    )


def make_texture_corpus(
    n_kb: int = 200,
    n_queries: int = 100,
    channels: int = 16,
    n_frames: int = 40,
    layers: tuple[int, ...] = DEFAULT_SYNTH_LAYERS,
    seed: int = 0,
    mean_level: float = 1.0,
    amplitude: float = 1.0,
    noise: float = 0.05,
    param_jitter: float = 0.02,
) -> SyntheticCorpus:
    """Generate a class-balanced KB plus held-out queries with feature maps.

    Every item gets its own resolved audio path, so the accompanying split
    (queries = test side, remainder = KB side) is leakage-free by
    construction.
    """
    rng = np.random.default_rng(seed)
    records: list[PresetRecord] = []
    feature_maps: dict[str, FeatureMapSet] = {}
    classes: dict[str, int] = {}

    def add_item(rid: str, item_class: int) -> None:
        layer_objs = tuple(
            LayerFeatures(
                idx,
                _texture_frames(rng, n_frames, channels, item_class, mean_level, amplitude, noise),
            )
            for idx in sorted(layers)
        )
        feature_maps[rid] = FeatureMapSet(item_id=rid, layers=layer_objs)
        classes[rid] = item_class
        records.append(
            PresetRecord(
                record_id=rid,
                song_name=f"song-{rid}",
                style=_CLASS_STYLES[item_class],
                feature_text=f"{_CLASS_FEATURES[item_class]} take {rid}",
                parameters=_class_parameters(rng, item_class, param_jitter),
                resolved_audio_path=f"/audio/{rid}.wav",
                cached_vectors={},
            )
        )

    for i in range(n_kb):
        add_item(f"kb{i:04d}", i % 2)
    for i in range(n_queries):
        add_item(f"q{i:04d}", i % 2)

    split = SplitSpec(
        test_ids=tuple(f"q{i:04d}" for i in range(n_queries)),
        kb_ids=tuple(f"kb{i:04d}" for i in range(n_kb)),
        grouping="resolved_audio_path",
        seed=seed,
    )
    return SyntheticCorpus(
        records=records,
        feature_maps=feature_maps,
        classes=classes,
        split=split,
        ranges=default_synth_ranges(),
    )


def random_feature_map(
    rng: np.random.Generator,
    item_id: str = "item",
    layers: tuple[int, ...] = DEFAULT_SYNTH_LAYERS,
    n_frames: int | None = None,
    channels: int | None = None,
    scale: float = 1.0,
) -> FeatureMapSet:
    """A generic random feature map (standard-normal activations)."""
    t = n_frames if n_frames is not None else int(rng.integers(1, 12))
    c = channels if channels is not None else int(rng.integers(1, 10))
    layer_objs = tuple(
        LayerFeatures(idx, (scale * rng.normal(size=(t, c))).astype(np.float32))
        for idx in sorted(layers)
    )
    return FeatureMapSet(item_id=item_id, layers=layer_objs)
