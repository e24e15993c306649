"""Experiment orchestration over a preset knowledge base.

Five drivers reproduce the benchmark workflow end to end:

* :func:`run_protocol_a` - retrieval-only comparison on a leakage-audited
  split: per-query top-K retrieval, parameter-space metrics, aggregates, and
  full paired statistics for every method pair,
* :func:`run_protocol_c` - degradation stress tests for the fusion heuristic
  (vague text, noisy audio, modality conflict),
* :func:`run_ablation` - projection dimension / layer set / projection type
  grids for the texture encoder,
* :func:`run_dedup_sweep` - re-evaluation after progressively removing
  near-duplicate knowledge-base entries,
* :func:`run_latency_profile` - per-component latency (median / p95) of the
  local retrieval path.

Every report embeds the configuration that produced it, so reruns with the
same config reproduce all non-timing fields exactly.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__ as _version
from .encoder import (
    DEFAULT_LAYERS,
    DEFAULT_OUTPUT_DIM,
    ProjectionSpec,
    fit_pca_projection,
    make_random_projection,
    mean_pool_encode,
    trr_encode,
)
from .errors import (
    ClockUnavailableError,
    DirtySplitError,
    MissingGroundTruthError,
    MissingLayerError,
    MissingLayerInFeaturesError,
)
from .feature_io import FeatureMapSet
from .knowledge_base import (
    ParamRanges,
    PresetRecord,
    SplitSpec,
    audit_split,
    near_duplicate_filter,
)
from .param_metrics import (
    LOWER_IS_BETTER,
    METRIC_NAMES,
    MetricReport,
    evaluate_pair,
    flatten,
    l2_error,
)
from .retrieval import (
    FusionConfig,
    RankedResult,
    build_embedding_index,
    cosine_top_k,
    fused_top_k,
)
from .stats import ComparisonReport, PairedSample, compare, holm_correct
from .text_index import build_text_index, score_all

DEFAULT_LAYER_GRID = ((4,), (5,), (6,), (4, 5), (5, 6), (4, 5, 6))
DEFAULT_DIM_GRID = (32, 64, 128, 256)
DEFAULT_TAU_GRID = (0.005, 0.01, 0.02, 0.05)


# ---------------------------------------------------------------------------
# Method descriptors and shared data bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """How one retrieval method produces a ranking.

    kind: ``trr`` (texture embedding), ``meanpool`` (pooled baseline),
    ``text`` (lexical), or ``vectors`` (externally supplied cached vectors
    named by ``vector_source``).
    """

    kind: str
    name: str = ""
    projection: Optional[ProjectionSpec] = None
    layers: tuple[int, ...] = DEFAULT_LAYERS
    pool_layer: Optional[int] = None
    vector_source: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("trr", "meanpool", "text", "vectors"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "vectors" and not self.vector_source:
            raise ValueError("vectors method needs vector_source")
        if not self.name:
            default = {
                "trr": "TRR",
                "meanpool": "MeanPool",
                "text": "Text",
                "vectors": f"Vectors[{self.vector_source}]",
            }[self.kind]
            object.__setattr__(self, "name", default)


@dataclass
class EvalData:
    """Corpus handed to the drivers: records plus cached feature maps."""

    records: list[PresetRecord]
    feature_maps: dict[str, FeatureMapSet] = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {r.record_id: r for r in self.records}


@dataclass
class ProtocolAConfig:
    split: SplitSpec
    methods: list[MethodSpec]
    k: int = 1
    ranges: Optional[ParamRanges] = None
    acc_tol: float = 0.1
    active_thresh: float = 0.05
    jaccard_activity: str = "numeric_leaf"
    seed: int = 0
    bootstrap_resamples: int = 10_000
    permutation_resamples: int = 100_000
    max_exact_n: int = 20
    with_comparisons: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.methods:
            raise ValueError("methods must be non-empty")

    def describe(self) -> dict:
        return {
            "split": {"grouping": self.split.grouping, "seed": self.split.seed,
                      "n_test": len(self.split.test_ids), "n_kb": len(self.split.kb_ids)},
            "methods": [m.name for m in self.methods],
            "k": self.k,
            "acc_tol": self.acc_tol,
            "active_thresh": self.active_thresh,
            "jaccard_activity": self.jaccard_activity,
            "seed": self.seed,
            "bootstrap_resamples": self.bootstrap_resamples,
            "permutation_resamples": self.permutation_resamples,
            "max_exact_n": self.max_exact_n,
            "tool_version": _version,
        }


# ---------------------------------------------------------------------------
# Protocol A
# ---------------------------------------------------------------------------

@dataclass
class MethodResult:
    method: str
    n: int
    per_query: dict[str, MetricReport]
    retrieved: dict[str, str]
    aggregates: dict[str, Optional[float]]
    defined_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "aggregates": self.aggregates,
            "defined_counts": self.defined_counts,
            "retrieved": self.retrieved,
            "per_query": {qid: rep.to_dict() for qid, rep in self.per_query.items()},
        }


@dataclass
class PairComparison:
    method_a: str
    method_b: str
    metric: str
    report: ComparisonReport

    def to_dict(self) -> dict:
        return {"method_a": self.method_a, "method_b": self.method_b,
                "metric": self.metric, **self.report.to_dict()}


@dataclass
class EvalReport:
    methods: list[MethodResult]
    comparisons: list[PairComparison]
    config: dict

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "methods": [m.to_dict() for m in self.methods],
            "comparisons": [c.to_dict() for c in self.comparisons],
        }


def _embedding_entries(spec: MethodSpec, data: EvalData, ids: Sequence[str]) -> dict[str, np.ndarray]:
    """Vectors for one embedding-backed method; ids without one are skipped."""
    entries: dict[str, np.ndarray] = {}
    for rid in ids:
        if spec.kind in ("trr", "meanpool"):
            fm = data.feature_maps.get(rid)
            if fm is None:
                continue
            if spec.kind == "trr":
                entries[rid] = trr_encode(fm, spec.projection, spec.layers).values
            else:
                layer = spec.pool_layer if spec.pool_layer is not None else fm.layer_indices[-1]
                entries[rid] = mean_pool_encode(fm, layer).values
        elif spec.kind == "vectors":
            vec = data.by_id[rid].cached_vectors.get(spec.vector_source)
            if vec is not None:
                entries[rid] = vec
    return entries


def _rank_text_scores(scores: dict[str, float], k: int) -> RankedResult:
    ids = tuple(sorted(scores))
    arr = np.array([scores[rid] for rid in ids])
    order = np.argsort(-arr, kind="stable")[:k]
    return RankedResult(items=tuple((ids[i], float(arr[i])) for i in order))


def _method_rankings(
    spec: MethodSpec, data: EvalData, split: SplitSpec, k: int
) -> dict[str, RankedResult]:
    """Top-K ranking per query id; queries the method cannot serve are absent."""
    kb_ids = split.kb_ids
    if spec.kind == "text":
        index = build_text_index([data.by_id[rid] for rid in kb_ids])
        out = {}
        for qid in split.test_ids:
            scores = score_all(index, data.by_id[qid].query_text)
            out[qid] = _rank_text_scores(scores, k)
        return out

    kb_entries = _embedding_entries(spec, data, kb_ids)
    if not kb_entries:
        return {}
    index = build_embedding_index(spec.name, kb_entries)
    query_entries = _embedding_entries(spec, data, split.test_ids)
    return {qid: cosine_top_k(index, vec, k) for qid, vec in query_entries.items()}


def _aggregate(per_query: dict[str, MetricReport]) -> tuple[dict, dict]:
    aggregates: dict[str, Optional[float]] = {}
    counts: dict[str, int] = {}
    for metric in METRIC_NAMES:
        values = [rep.get(metric) for rep in per_query.values() if rep.get(metric) is not None]
        counts[metric] = len(values)
        aggregates[metric] = float(np.mean(values)) if values else None
    return aggregates, counts


def _evaluate_method(
    spec: MethodSpec, data: EvalData, cfg: ProtocolAConfig
) -> MethodResult:
    rankings = _method_rankings(spec, data, cfg.split, cfg.k)
    per_query: dict[str, MetricReport] = {}
    retrieved: dict[str, str] = {}
    for qid, ranked in rankings.items():
        query = data.by_id[qid]
        if not query.parameters:
            raise MissingGroundTruthError(f"query {qid!r} has no parameters")
        top_id = ranked.top_id
        retrieved[qid] = top_id
        per_query[qid] = evaluate_pair(
            query.parameters,
            data.by_id[top_id].parameters,
            ranges=cfg.ranges,
            acc_tol=cfg.acc_tol,
            active_thresh=cfg.active_thresh,
            jaccard_activity=cfg.jaccard_activity,
        )
    aggregates, counts = _aggregate(per_query)
    return MethodResult(
        method=spec.name,
        n=len(per_query),
        per_query=per_query,
        retrieved=retrieved,
        aggregates=aggregates,
        defined_counts=counts,
    )


def _pair_comparisons(
    result_a: MethodResult, result_b: MethodResult, cfg: ProtocolAConfig
) -> list[PairComparison]:
    """Paired stats over queries valid for both methods (pairwise-complete).

    Differences are oriented as the signed *improvement* of method A over
    method B: for lower-is-better metrics the sign of (B - A), otherwise
    (A - B). Holm correction runs across this pair's defined metrics.
    """
    shared = sorted(set(result_a.per_query) & set(result_b.per_query))
    comparisons: list[PairComparison] = []
    reports: list[ComparisonReport] = []
    for metric in METRIC_NAMES:
        diffs = []
        for qid in shared:
            va = result_a.per_query[qid].get(metric)
            vb = result_b.per_query[qid].get(metric)
            if va is None or vb is None:
                continue
            diffs.append(vb - va if metric in LOWER_IS_BETTER else va - vb)
        if not diffs:
            continue
        sample = PairedSample.from_values(metric, diffs)
        report = compare(
            sample,
            bootstrap_resamples=cfg.bootstrap_resamples,
            permutation_resamples=cfg.permutation_resamples,
            max_exact_n=cfg.max_exact_n,
            seed=cfg.seed,
        )
        reports.append(report)
        comparisons.append(
            PairComparison(result_a.method, result_b.method, metric, report)
        )
    adjusted = holm_correct([r.p_perm for r in reports])
    for i, comp in enumerate(comparisons):
        comp.report = dataclasses.replace(comp.report, p_holm=adjusted[i])
    return comparisons


def run_protocol_a(cfg: ProtocolAConfig, data: EvalData) -> EvalReport:
    """Retrieval-only comparison of all configured methods on a clean split."""
    audit = audit_split(cfg.split, data.records)
    if not audit.clean:
        raise DirtySplitError(
            f"{audit.shared_path_count} group keys shared across the split: "
            f"{list(audit.shared_paths)[:5]}"
        )
    results = [_evaluate_method(spec, data, cfg) for spec in cfg.methods]
    comparisons: list[PairComparison] = []
    if cfg.with_comparisons:
        for i in range(len(results)):
            for j in range(i + 1, len(results)):
                if results[i].n == 0 or results[j].n == 0:
                    continue
                comparisons.extend(_pair_comparisons(results[i], results[j], cfg))
    return EvalReport(methods=results, comparisons=comparisons, config=cfg.describe())


_TABLE_COLUMNS = (
    ("L2", "l2"),
    ("Norm.L2", "norm_l2"),
    ("Acc@0.1", "acc_at_0_1"),
    ("Recall", "recall"),
    ("Cos", "cosine"),
    ("Module", "module_jaccard"),
)


def render_table(report: EvalReport) -> str:
    """Plain-text aggregate table: Method, n, then one column per metric."""
    header = ["Method", "n"] + [label for label, _ in _TABLE_COLUMNS]
    rows = [header]
    for result in report.methods:
        row = [result.method, str(result.n)]
        for _, metric in _TABLE_COLUMNS:
            value = result.aggregates.get(metric)
            row.append("--" if value is None else f"{value:.4f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip())
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Protocol C: degradation scenarios
# ---------------------------------------------------------------------------

VAGUE_TEXT = "vague_text"
NOISY_AUDIO = "noisy_audio"
CONFLICT = "conflict"


@dataclass(frozen=True)
class DegradationScenario:
    """One stress-test construction.

    vague_text: every query's text is replaced by ``replacement_text``.
    noisy_audio: query embeddings get seeded Gaussian noise of magnitude
    ``noise_sigma`` (then renormalized); when ``gate_signal`` is set the
    fusion branch additionally sees the vector rescaled to ``signal_norm``,
    below the audio gate threshold, so the gate fires.
    conflict: the text side is drawn from a different preset than the audio
    side (seeded derangement); ground truth is the audio-side preset.
    """

    kind: str
    replacement_text: str = "warm guitar tone"
    noise_sigma: float = 1.0
    gate_signal: bool = True
    signal_norm: float = 1e-6
    pairing_seed: int = 0

    def __post_init__(self):
        if self.kind not in (VAGUE_TEXT, NOISY_AUDIO, CONFLICT):
            raise ValueError(f"unknown scenario kind {self.kind!r}")

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == VAGUE_TEXT:
            out["replacement_text"] = self.replacement_text
        elif self.kind == NOISY_AUDIO:
            out.update(noise_sigma=self.noise_sigma, gate_signal=self.gate_signal,
                       signal_norm=self.signal_norm)
        else:
            out["pairing_seed"] = self.pairing_seed
        return out


@dataclass
class ProtocolCConfig:
    split: SplitSpec
    projection: ProjectionSpec
    layers: tuple[int, ...] = DEFAULT_LAYERS
    fusion: FusionConfig = field(default_factory=FusionConfig)
    ranges: Optional[ParamRanges] = None
    seed: int = 0
    k: int = 1

    def describe(self) -> dict:
        return {
            "layers": list(self.layers),
            "fusion": dataclasses.asdict(self.fusion),
            "seed": self.seed,
            "k": self.k,
            "n_queries": len(self.split.test_ids),
            "n_kb": len(self.split.kb_ids),
            "tool_version": _version,
        }


@dataclass
class DegradationRow:
    name: str
    n: int
    l2_mean: float
    retrieved: dict[str, str]
    mean_w_text: Optional[float] = None
    mean_w_audio: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "l2_mean": self.l2_mean,
            "mean_w_text": self.mean_w_text,
            "mean_w_audio": self.mean_w_audio,
            "retrieved": self.retrieved,
        }


@dataclass
class DegradationReport:
    scenario: dict
    rows: list[DegradationRow]
    fusion_underperforms: Optional[bool]
    config: dict

    def row(self, name: str) -> DegradationRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rows": [r.to_dict() for r in self.rows],
            "fusion_underperforms": self.fusion_underperforms,
            "config": self.config,
        }


def _mean_l2(
    retrieved: dict[str, str], gt_params: dict[str, dict], data: EvalData
) -> float:
    values = [
        l2_error(flatten(gt_params[qid]), flatten(data.by_id[rid].parameters))
        for qid, rid in retrieved.items()
    ]
    return float(np.mean(values))


def run_protocol_c(
    scenario: DegradationScenario, data: EvalData, cfg: ProtocolCConfig
) -> DegradationReport:
    """Compare Text-only, TRR-only and Fusion under one degradation scenario."""
    kb_records = [data.by_id[rid] for rid in cfg.split.kb_ids]
    text_index = build_text_index(kb_records)
    trr_entries = {
        rid: trr_encode(data.feature_maps[rid], cfg.projection, cfg.layers).values
        for rid in cfg.split.kb_ids
    }
    audio_index = build_embedding_index("TRR", trr_entries)
    rng = np.random.default_rng(cfg.seed)

    query_ids = list(cfg.split.test_ids)
    base_vecs = {
        qid: trr_encode(data.feature_maps[qid], cfg.projection, cfg.layers).values
        for qid in query_ids
    }

    # Scenario-specific query-side construction.
    texts: dict[str, str] = {}
    trr_vecs: dict[str, np.ndarray] = {}
    fusion_vecs: dict[str, np.ndarray] = {}
    gt_params: dict[str, dict] = {qid: data.by_id[qid].parameters for qid in query_ids}

    if scenario.kind == VAGUE_TEXT:
        for qid in query_ids:
            texts[qid] = scenario.replacement_text
            trr_vecs[qid] = base_vecs[qid]
            fusion_vecs[qid] = base_vecs[qid]
    elif scenario.kind == NOISY_AUDIO:
        for qid in query_ids:
            texts[qid] = data.by_id[qid].query_text
            noisy = base_vecs[qid] + scenario.noise_sigma * rng.normal(size=base_vecs[qid].shape)
            unit = noisy / np.linalg.norm(noisy)
            trr_vecs[qid] = unit
            fusion_vecs[qid] = unit * scenario.signal_norm if scenario.gate_signal else unit
    else:  # CONFLICT
        pair_rng = np.random.default_rng(scenario.pairing_seed)
        perm = pair_rng.permutation(len(query_ids))
        for i in range(len(query_ids)):
            if perm[i] == i:
                swap = (i + 1) % len(query_ids)
                perm[i], perm[swap] = perm[swap], perm[i]
        for i, qid in enumerate(query_ids):
            texts[qid] = data.by_id[query_ids[perm[i]]].query_text
            trr_vecs[qid] = base_vecs[qid]
            fusion_vecs[qid] = base_vecs[qid]

    text_retrieved = {}
    for qid in query_ids:
        text_retrieved[qid] = _rank_text_scores(score_all(text_index, texts[qid]), cfg.k).top_id
    trr_retrieved = {
        qid: cosine_top_k(audio_index, trr_vecs[qid], cfg.k).top_id for qid in query_ids
    }
    fused_retrieved = {}
    w_text_sum = w_audio_sum = 0.0
    for qid in query_ids:
        ranked = fused_top_k(
            text_index, audio_index, texts[qid], fusion_vecs[qid], cfg.fusion, cfg.k
        )
        fused_retrieved[qid] = ranked.top_id
        w_text_sum += ranked.effective_weights[0]
        w_audio_sum += ranked.effective_weights[1]

    n = len(query_ids)
    rows = [
        DegradationRow("Text-only", n, _mean_l2(text_retrieved, gt_params, data), text_retrieved),
        DegradationRow("TRR-only", n, _mean_l2(trr_retrieved, gt_params, data), trr_retrieved),
        DegradationRow(
            "Fusion", n, _mean_l2(fused_retrieved, gt_params, data), fused_retrieved,
            mean_w_text=w_text_sum / n, mean_w_audio=w_audio_sum / n,
        ),
    ]
    failure = None
    if scenario.kind == CONFLICT:
        best_single = min(rows[0].l2_mean, rows[1].l2_mean)
        failure = rows[2].l2_mean > best_single
    return DegradationReport(
        scenario=scenario.describe(),
        rows=rows,
        fusion_underperforms=failure,
        config=cfg.describe(),
    )


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------

ABLATION_PROJECTION_DIM = "projection_dim"
ABLATION_LAYER_SET = "layer_set"
ABLATION_PROJECTION_TYPE = "projection_type"


@dataclass
class AblationConfig:
    split: SplitSpec
    projection_seed: int = 0
    output_dim: int = DEFAULT_OUTPUT_DIM
    layers: tuple[int, ...] = DEFAULT_LAYERS
    ranges: Optional[ParamRanges] = None
    k: int = 1

    def describe(self) -> dict:
        return {
            "projection_seed": self.projection_seed,
            "output_dim": self.output_dim,
            "layers": list(self.layers),
            "k": self.k,
            "n_queries": len(self.split.test_ids),
            "n_kb": len(self.split.kb_ids),
            "tool_version": _version,
        }


@dataclass
class AblationReport:
    kind: str
    points: list[dict]
    config: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": self.points, "config": self.config}


def _input_dim(data: EvalData) -> int:
    for fm in data.feature_maps.values():
        return fm.channel_count
    raise MissingLayerInFeaturesError("no feature maps available")


def _trr_point(
    data: EvalData, split: SplitSpec, proj: ProjectionSpec, layers: tuple[int, ...],
    ranges: Optional[ParamRanges], k: int,
) -> tuple[int, dict, dict]:
    spec = MethodSpec(kind="trr", name="TRR", projection=proj, layers=layers)
    cfg = ProtocolAConfig(split=split, methods=[spec], k=k, ranges=ranges,
                          with_comparisons=False)
    try:
        result = _evaluate_method(spec, data, cfg)
    except MissingLayerError as exc:
        raise MissingLayerInFeaturesError(str(exc)) from None
    return result.n, result.aggregates, result.defined_counts


def run_ablation(kind: str, grid: Sequence, data: EvalData, cfg: AblationConfig) -> AblationReport:
    """Re-encode and re-evaluate the texture method per grid point."""
    if not grid:
        raise ValueError("ablation grid must be non-empty")
    input_dim = _input_dim(data)
    points: list[dict] = []
    for point in grid:
        if kind == ABLATION_PROJECTION_DIM:
            dim = int(point)
            proj = make_random_projection(input_dim, dim, cfg.projection_seed)
            layers = cfg.layers
            label = {"projection_dim": dim}
        elif kind == ABLATION_LAYER_SET:
            layers = tuple(sorted(int(x) for x in point))
            proj = make_random_projection(input_dim, cfg.output_dim, cfg.projection_seed)
            label = {"layers": list(layers)}
        elif kind == ABLATION_PROJECTION_TYPE:
            layers = cfg.layers
            if point == "random":
                proj = make_random_projection(input_dim, cfg.output_dim, cfg.projection_seed)
            elif point == "pca":
                # Fit on KB-side feature maps only, never on queries.
                kb_fms = [data.feature_maps[rid] for rid in cfg.split.kb_ids
                          if rid in data.feature_maps]
                try:
                    proj = fit_pca_projection(kb_fms, layers, cfg.output_dim)
                except MissingLayerError as exc:
                    raise MissingLayerInFeaturesError(str(exc)) from None
            else:
                raise ValueError(f"unknown projection type {point!r}")
            label = {"projection_type": point}
        else:
            raise ValueError(f"unknown ablation kind {kind!r}")
        n, aggregates, counts = _trr_point(data, cfg.split, proj, layers, cfg.ranges, cfg.k)
        points.append({
            **label,
            "n": n,
            "embedding_dim": proj.output_dim ** 2,
            "aggregates": aggregates,
            "defined_counts": counts,
        })
    return AblationReport(kind=kind, points=points, config=cfg.describe())


# ---------------------------------------------------------------------------
# Near-duplicate sensitivity sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    entries: list[dict]
    config: dict

    def kb_sizes(self) -> list[int]:
        return [e["kb_size"] for e in self.entries]

    def to_dict(self) -> dict:
        return {"entries": self.entries, "config": self.config}


def run_dedup_sweep(taus: Sequence[float], data: EvalData, cfg: ProtocolAConfig) -> SweepReport:
    """Per threshold: near-duplicate-filter the KB, then re-run all methods."""
    taus = list(taus)
    if not taus:
        raise ValueError("tau grid must be non-empty")
    if any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be positive and strictly ascending")
    if cfg.ranges is None:
        raise ValueError("dedup sweep needs parameter ranges for normalized distance")
    kb_records = [data.by_id[rid] for rid in cfg.split.kb_ids]
    entries = []
    for tau in taus:
        kept = near_duplicate_filter(kb_records, cfg.ranges, tau)
        kept_ids = tuple(r.record_id for r in kept)
        sub_split = SplitSpec(
            test_ids=cfg.split.test_ids,
            kb_ids=kept_ids,
            grouping=cfg.split.grouping,
            seed=cfg.split.seed,
        )
        sub_cfg = dataclasses.replace(cfg, split=sub_split, with_comparisons=False)
        report = run_protocol_a(sub_cfg, data)
        entries.append({
            "tau": tau,
            "kb_size": len(kept_ids),
            "methods": {
                m.method: {"n": m.n, "aggregates": m.aggregates} for m in report.methods
            },
        })
    return SweepReport(entries=entries, config=cfg.describe())


# ---------------------------------------------------------------------------
# Latency profiling
# ---------------------------------------------------------------------------

class FakeClock:
    """Deterministic clock: each call advances by a fixed step (seconds).

    Time is tick-counted (``calls * step``), not accumulated, and the default
    step is a power of two, so every measured interval is bit-identical and
    median == p95 holds exactly. Pass a dyadic step (1 / 2**k) to keep that
    exactness with other resolutions.
    """

    def __init__(self, step: float = 2.0 ** -10):
        self.step = float(step)
        self._calls = 0

    def __call__(self) -> float:
        self._calls += 1
        return self._calls * self.step


@dataclass
class LatencyProfile:
    components: dict[str, dict[str, float]]  # name -> {median_ms, p95_ms}
    pool_size: int
    n_queries: int
    warmups: int
    repeats: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "components": self.components,
            "pool_size": self.pool_size,
            "n_queries": self.n_queries,
            "warmups": self.warmups,
            "repeats": self.repeats,
            "config": self.config,
        }


PROFILE_COMPONENTS = ("text_scoring", "audio_scoring", "fusion", "projection", "end_to_end")


def _nearest_rank_p95(values: np.ndarray) -> float:
    """Nearest-rank quantile: sorted value at index ceil(0.95 * n) - 1."""
    ordered = np.sort(values)
    rank = int(np.ceil(0.95 * ordered.size)) - 1
    return float(ordered[rank])


def run_latency_profile(
    query_ids: Sequence[str],
    data: EvalData,
    cfg: ProtocolCConfig,
    warmups: int = 5,
    repeats: int = 3,
    clock: Optional[Callable[[], float]] = None,
) -> LatencyProfile:
    """Time the local retrieval pipeline per component, single-threaded.

    Per query: ``warmups`` untimed pipeline runs, then ``repeats`` timed ones.
    The pool therefore holds ``len(query_ids) * repeats`` runs per component.
    Components are measured inside the end-to-end run with a monotonic
    high-resolution clock (injectable for reproducible tests):

    * projection: query-side texture encoding (projection + Gram + normalize),
    * text_scoring: lexical scores over the knowledge base,
    * audio_scoring: cosine scores + ranking over the knowledge base,
    * fusion: quality gates, score combination and final ranking,
    * end_to_end: the four stages in sequence.

    p95 is the nearest-rank quantile, so results are bit-reproducible given
    identical timings.
    """
    if not query_ids:
        raise ValueError("query pool must be non-empty")
    if clock is None:
        clock = time.perf_counter
    if clock is None:  # pragma: no cover - perf_counter always exists
        raise ClockUnavailableError("no monotonic clock available")

    kb_records = [data.by_id[rid] for rid in cfg.split.kb_ids]
    text_index = build_text_index(kb_records)
    trr_entries = {
        rid: trr_encode(data.feature_maps[rid], cfg.projection, cfg.layers).values
        for rid in cfg.split.kb_ids
    }
    audio_index = build_embedding_index("TRR", trr_entries)

    timings: dict[str, list[float]] = {name: [] for name in PROFILE_COMPONENTS}

    def pipeline(qid: str, record_timings: bool) -> None:
        record = data.by_id[qid]
        fm = data.feature_maps[qid]
        t0 = clock()
        emb = trr_encode(fm, cfg.projection, cfg.layers)
        t1 = clock()
        text_scores = score_all(text_index, record.query_text)
        t2 = clock()
        cosines = audio_index.matrix @ emb.values
        audio_top = np.argsort(-cosines, kind="stable")[: cfg.k]
        t3 = clock()
        confidence = max(text_scores.values(), default=0.0)
        w_text, w_audio = (cfg.fusion.w_text, cfg.fusion.w_audio)
        if confidence < cfg.fusion.vague_threshold:
            w_text, w_audio = 0.0, 1.0
        audio_scores = (cosines + 1.0) / 2.0
        fused = np.array(
            [w_text * text_scores[rid] for rid in audio_index.ids]
        ) + w_audio * audio_scores
        fused_top = np.argsort(-fused, kind="stable")[: cfg.k]
        t4 = clock()
        assert audio_top.size and fused_top.size
        if record_timings:
            timings["projection"].append(t1 - t0)
            timings["text_scoring"].append(t2 - t1)
            timings["audio_scoring"].append(t3 - t2)
            timings["fusion"].append(t4 - t3)
            timings["end_to_end"].append(t4 - t0)

    for qid in query_ids:
        for _ in range(warmups):
            pipeline(qid, record_timings=False)
        for _ in range(repeats):
            pipeline(qid, record_timings=True)

    components = {}
    for name, values in timings.items():
        arr = np.asarray(values) * 1e3  # seconds -> ms
        components[name] = {
            "median_ms": float(np.median(arr)),
            "p95_ms": _nearest_rank_p95(arr),
        }
    return LatencyProfile(
        components=components,
        pool_size=len(query_ids) * repeats,
        n_queries=len(query_ids),
        warmups=warmups,
        repeats=repeats,
        config=cfg.describe(),
    )
