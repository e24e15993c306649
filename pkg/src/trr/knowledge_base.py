"""Preset dataset loading, leakage-free splits, and near-duplicate handling.

The dataset is a JSON array of records with fields ``RecordId``, ``SongName``,
``Style``, ``Feature``, ``Parameters`` (nested object), ``ResolvedAudioPath``
and optional ``Vectors`` (vector-source name -> number array). Splits group
records by a shared key (resolved audio path by default) and sample whole
groups, so no group ever straddles the test/KB boundary.

Near-duplicate distances are Euclidean L2 over min-max-normalized flattened
parameter vectors (union keys, missing treated as 0). Normalization uses the
configured physical ranges; without it, thresholds like 0.005 would be
meaningless across mixed-unit parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DuplicateIdError,
    MalformedJsonError,
    MissingFieldError,
    MissingRangeError,
    TooFewGroupsError,
    UnknownIdError,
)

GROUP_BY_PATH = "resolved_audio_path"
GROUP_BY_SONG = "song_name"
_GROUPINGS = (GROUP_BY_PATH, GROUP_BY_SONG)

_REQUIRED_FIELDS = ("RecordId", "SongName", "Style", "Feature", "Parameters", "ResolvedAudioPath")


@dataclass
class PresetRecord:
    """One preset: text metadata, nested parameters, audio path, cached vectors."""

    record_id: str
    song_name: str
    style: str
    feature_text: str
    parameters: dict
    resolved_audio_path: str
    cached_vectors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def query_text(self) -> str:
        """The record's text side: style and feature description."""
        return f"{self.style} {self.feature_text}".strip()


@dataclass(frozen=True)
class SplitSpec:
    """Held-out query ids vs knowledge-base ids, with the grouping used."""

    test_ids: tuple[str, ...]
    kb_ids: tuple[str, ...]
    grouping: str
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "test_ids": list(self.test_ids),
            "kb_ids": list(self.kb_ids),
            "grouping": self.grouping,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitSpec":
        return cls(
            test_ids=tuple(data["test_ids"]),
            kb_ids=tuple(data["kb_ids"]),
            grouping=data["grouping"],
            seed=data.get("seed"),
        )


@dataclass(frozen=True)
class AuditReport:
    """Leakage audit: shared group keys and optional near-duplicate count."""

    shared_path_count: int
    shared_paths: tuple[str, ...]
    near_duplicate_pairs: Optional[int] = None
    tau: Optional[float] = None

    @property
    def clean(self) -> bool:
        return self.shared_path_count == 0

    def to_dict(self) -> dict:
        return {
            "shared_path_count": self.shared_path_count,
            "shared_paths": list(self.shared_paths),
            "near_duplicate_pairs": self.near_duplicate_pairs,
            "tau": self.tau,
        }


class ParamRanges:
    """Physical [min, max] ranges per dot-key, with an optional default."""

    def __init__(self, entries: dict[str, tuple[float, float]], default: Optional[tuple[float, float]] = None):
        for key, (lo, hi) in entries.items():
            if not lo < hi:
                raise ValueError(f"range for {key!r} must satisfy min < max, got [{lo}, {hi}]")
        if default is not None and not default[0] < default[1]:
            raise ValueError(f"default range must satisfy min < max, got {default}")
        self.entries = dict(entries)
        self.default = default

    def get(self, key: str) -> tuple[float, float]:
        if key in self.entries:
            return self.entries[key]
        if self.default is not None:
            return self.default
        raise MissingRangeError(key)

    def has(self, key: str) -> bool:
        return key in self.entries or self.default is not None

    def normalize(self, key: str, value: float) -> float:
        """Min-max map to [0, 1], clamped."""
        lo, hi = self.get(key)
        return min(1.0, max(0.0, (value - lo) / (hi - lo)))

    @classmethod
    def from_dict(cls, data: dict) -> "ParamRanges":
        default = None
        entries = {}
        for key, spec in data.items():
            pair = (float(spec["min"]), float(spec["max"]))
            if key == "default":
                default = pair
            else:
                entries[key] = pair
        return cls(entries, default)

    def to_dict(self) -> dict:
        out = {key: {"min": lo, "max": hi} for key, (lo, hi) in self.entries.items()}
        if self.default is not None:
            out["default"] = {"min": self.default[0], "max": self.default[1]}
        return out


def load_ranges(path: Union[str, Path]) -> ParamRanges:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return ParamRanges.from_dict(data)


def _validate_param_tree(tree: dict, record_id: str, path: str = "") -> None:
    for key, value in tree.items():
        if not isinstance(key, str) or key == "":
            raise MalformedJsonError(
                f"record {record_id!r}: empty or non-string parameter key under {path or '<root>'!r}"
            )
        if "." in key:
            raise MalformedJsonError(
                f"record {record_id!r}: parameter key {key!r} contains '.', "
                "which is reserved as the flattening separator"
            )
        if isinstance(value, dict):
            _validate_param_tree(value, record_id, f"{path}.{key}" if path else key)


def _parse_record(raw: dict, position: int) -> PresetRecord:
    if not isinstance(raw, dict):
        raise MalformedJsonError(f"record #{position} is not a JSON object")
    for fieldname in _REQUIRED_FIELDS:
        if fieldname not in raw:
            raise MissingFieldError(fieldname, f"record #{position}")
    record_id = raw["RecordId"]
    params = raw["Parameters"]
    if not isinstance(params, dict) or not params:
        raise MalformedJsonError(f"record {record_id!r}: Parameters must be a non-empty object")
    _validate_param_tree(params, str(record_id))
    path = raw["ResolvedAudioPath"]
    if not isinstance(path, str) or path == "":
        raise MalformedJsonError(f"record {record_id!r}: ResolvedAudioPath must be non-empty")
    vectors = {}
    for name, values in (raw.get("Vectors") or {}).items():
        vectors[name] = np.asarray(values, dtype=np.float64)
    return PresetRecord(
        record_id=str(record_id),
        song_name=str(raw["SongName"]),
        style=str(raw["Style"]),
        feature_text=str(raw["Feature"]),
        parameters=params,
        resolved_audio_path=path,
        cached_vectors=vectors,
    )


def load_dataset(path: Union[str, Path]) -> list[PresetRecord]:
    """Load and validate the dataset JSON array.

    Raises MalformedJsonError / MissingFieldError / DuplicateIdError with the
    offending record named.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"{path}: {exc}") from None
    if not isinstance(data, list):
        raise MalformedJsonError(f"{path}: top level must be a JSON array")
    records = []
    seen: set[str] = set()
    for i, raw in enumerate(data):
        record = _parse_record(raw, i)
        if record.record_id in seen:
            raise DuplicateIdError(f"duplicate record id {record.record_id!r}")
        seen.add(record.record_id)
        records.append(record)
    return records


def serialize_dataset(records: Sequence[PresetRecord], path: Union[str, Path]) -> None:
    """Write records back to the dataset JSON schema (lossless round-trip)."""
    data = []
    for r in records:
        raw = {
            "RecordId": r.record_id,
            "SongName": r.song_name,
            "Style": r.style,
            "Feature": r.feature_text,
            "Parameters": r.parameters,
            "ResolvedAudioPath": r.resolved_audio_path,
        }
        if r.cached_vectors:
            raw["Vectors"] = {name: [float(x) for x in vec] for name, vec in r.cached_vectors.items()}
        data.append(raw)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _group_key(record: PresetRecord, grouping: str) -> str:
    if grouping == GROUP_BY_PATH:
        return record.resolved_audio_path
    if grouping == GROUP_BY_SONG:
        return record.song_name
    raise ValueError(f"unknown grouping {grouping!r}; expected one of {_GROUPINGS}")


def build_split(
    records: Sequence[PresetRecord],
    grouping: str = GROUP_BY_PATH,
    test_fraction: float = 0.16,
    seed: int = 0,
) -> SplitSpec:
    """Sample whole groups into the test side until it reaches ``test_fraction``.

    Records are grouped by the grouping key; group keys are shuffled with a
    PCG64 generator seeded by ``seed`` and whole groups move to the test side
    until it first holds >= ``test_fraction`` of all records. No group key
    ever appears on both sides, so the split is leakage-free by construction.
    The test-side record count therefore only approximates the fraction: group
    sampling, not exact-count targeting, decides it.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups: dict[str, list[str]] = {}
    for record in records:
        groups.setdefault(_group_key(record, grouping), []).append(record.record_id)
    if len(groups) < 2:
        raise TooFewGroupsError(f"need at least 2 groups, found {len(groups)}")

    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keys))
    threshold = test_fraction * len(records)
    test_keys: set[str] = set()
    count = 0
    for pos in order:
        key = keys[pos]
        test_keys.add(key)
        count += len(groups[key])
        if count >= threshold:
            break
    if len(test_keys) == len(keys):
        raise TooFewGroupsError(
            "reaching the test fraction would leave the knowledge base empty"
        )
    test_ids = tuple(r.record_id for r in records if _group_key(r, grouping) in test_keys)
    kb_ids = tuple(r.record_id for r in records if _group_key(r, grouping) not in test_keys)
    return SplitSpec(test_ids=test_ids, kb_ids=kb_ids, grouping=grouping, seed=seed)


def _flatten_for_distance(record: PresetRecord) -> dict[str, float]:
    # deferred import: param_metrics imports ParamRanges from this module
    from .param_metrics import flatten

    return flatten(record.parameters)


def _normalized_rows(
    records: Sequence[PresetRecord], ranges: ParamRanges
) -> tuple[np.ndarray, list[str]]:
    """Dense matrix of min-max-normalized flattened parameters, missing -> 0."""
    flats = [_flatten_for_distance(r) for r in records]
    keys = sorted(set().union(*[f.keys() for f in flats])) if flats else []
    key_pos = {k: i for i, k in enumerate(keys)}
    matrix = np.zeros((len(records), len(keys)), dtype=np.float64)
    for row, flat in enumerate(flats):
        for key, value in flat.items():
            matrix[row, key_pos[key]] = ranges.normalize(key, value)
    return matrix, keys


def near_duplicate_filter(
    kb: Sequence[PresetRecord], ranges: ParamRanges, tau: float
) -> list[PresetRecord]:
    """Greedy dedup: drop any record within L2 distance ``tau`` of a kept one.

    Records are scanned in ascending record-id order; of a duplicate pair the
    record with the smaller id survives, making runs reproducible. Filtering
    is idempotent and the kept-set size is non-increasing in ``tau``.
    """
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    ordered = sorted(kb, key=lambda r: r.record_id)
    matrix, _ = _normalized_rows(ordered, ranges)
    kept_rows: list[int] = []
    for row in range(len(ordered)):
        if kept_rows:
            dists = np.linalg.norm(matrix[kept_rows] - matrix[row], axis=1)
            if (dists <= tau).any():
                continue
        kept_rows.append(row)
    kept_ids = {ordered[row].record_id for row in kept_rows}
    return [r for r in kb if r.record_id in kept_ids]


def audit_split(
    split: SplitSpec,
    records: Sequence[PresetRecord],
    ranges: Optional[ParamRanges] = None,
    tau: Optional[float] = None,
) -> AuditReport:
    """Count group keys shared across sides, plus near-duplicate pairs if
    ``tau`` (and ``ranges``) are supplied."""
    by_id = {r.record_id: r for r in records}
    for rid in (*split.test_ids, *split.kb_ids):
        if rid not in by_id:
            raise UnknownIdError(f"split references unknown record id {rid!r}")
    test = [by_id[rid] for rid in split.test_ids]
    kb = [by_id[rid] for rid in split.kb_ids]
    test_keys = {_group_key(r, split.grouping) for r in test}
    kb_keys = {_group_key(r, split.grouping) for r in kb}
    shared = tuple(sorted(test_keys & kb_keys))

    near_pairs = None
    if tau is not None:
        if ranges is None:
            raise ValueError("near-duplicate audit requires ranges")
        if not tau > 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        matrix, _ = _normalized_rows(list(test) + list(kb), ranges)
        tmat, kmat = matrix[: len(test)], matrix[len(test) :]
        near_pairs = 0
        for row in range(tmat.shape[0]):
            dists = np.linalg.norm(kmat - tmat[row], axis=1)
            near_pairs += int((dists <= tau).sum())
    return AuditReport(
        shared_path_count=len(shared),
        shared_paths=shared,
        near_duplicate_pairs=near_pairs,
        tau=tau,
    )


def save_split(split: SplitSpec, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(path: Union[str, Path]) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return SplitSpec.from_dict(json.load(fh))
