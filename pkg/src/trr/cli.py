"""Command-line entry point.

Subcommands: ``encode``, ``build-kb``, ``split``, ``audit-split``, ``query``,
``eval``, ``ablate``, ``dedup-sweep``, ``profile``. Global flags ``--seed``,
``--jobs``, ``--config`` and ``--out`` apply to every subcommand; values from
the optional JSON config file fill in any flag not given explicitly, and the
fully resolved configuration is echoed into every output.

All randomness flows from the single ``--seed`` flag: the value is passed
verbatim to each seeded component (projection init, split sampling, paired
statistics), each of which runs its own PCG64 stream, so a full run is
reproducible end to end from one number.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .encoder import (
    DEFAULT_LAYERS,
    DEFAULT_OUTPUT_DIM,
    make_random_projection,
    mean_pool_encode,
    read_projection,
    trr_encode,
    write_projection,
)
from .errors import TrrError
from .feature_io import read_feature_dir, read_feature_file
from .knowledge_base import (
    audit_split,
    build_split,
    load_dataset,
    load_ranges,
    load_split,
    save_split,
    serialize_dataset,
)
from .param_metrics import flatten, validate_feasible
from .protocols import (
    AblationConfig,
    EvalData,
    FakeClock,
    MethodSpec,
    ProtocolAConfig,
    ProtocolCConfig,
    render_table,
    run_ablation,
    run_dedup_sweep,
    run_latency_profile,
    run_protocol_a,
)
from .retrieval import FusionConfig, build_embedding_index, fused_top_k
from .text_index import build_text_index, score_all

STORE_FORMAT = "trr-embedding-store"


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------

def _parse_layers(text: str | None) -> tuple[int, ...]:
    if not text:
        return DEFAULT_LAYERS
    return tuple(sorted(int(x) for x in str(text).replace(" ", "").split(",") if x))


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_store(entries: dict[str, np.ndarray], source: str, path: Path, config: dict) -> None:
    """Persist an embedding store as deterministic JSON (float32 values)."""
    ids = sorted(entries)
    dim = int(np.asarray(entries[ids[0]]).size) if ids else 0
    payload = {
        "format": STORE_FORMAT,
        "version": 1,
        "source": source,
        "dimension": dim,
        "config": config,
        "entries": {
            rid: [float(np.float32(x)) for x in np.asarray(entries[rid]).ravel()]
            for rid in ids
        },
    }
    _write_json(payload, path)


def load_store(path: Path) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != STORE_FORMAT:
        raise TrrError(f"{path} is not an embedding store")
    entries = {rid: np.asarray(vec, dtype=np.float64) for rid, vec in payload["entries"].items()}
    return payload.get("source", "store"), entries


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    out = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    out["tool_version"] = __version__
    return out


def _load_projection(args, input_dim: int):
    """Load the projection sidecar, creating and persisting it if absent."""
    path = Path(args.proj) if getattr(args, "proj", None) else None
    if path is not None and path.exists():
        return read_projection(path)
    proj = make_random_projection(
        input_dim,
        args.output_dim if getattr(args, "output_dim", None) else DEFAULT_OUTPUT_DIM,
        args.seed,
    )
    if path is not None:
        write_projection(proj, path)
    return proj


def _parse_methods(spec_text: str, args, input_dim: int) -> list[MethodSpec]:
    methods = []
    proj = None
    for part in spec_text.replace(" ", "").split(","):
        if not part:
            continue
        if part == "trr":
            if proj is None:
                proj = _load_projection(args, input_dim)
            methods.append(MethodSpec(kind="trr", projection=proj,
                                      layers=_parse_layers(args.layers)))
        elif part == "meanpool":
            methods.append(MethodSpec(kind="meanpool", pool_layer=args.pool_layer))
        elif part == "text":
            methods.append(MethodSpec(kind="text"))
        elif part.startswith("vectors:"):
            methods.append(MethodSpec(kind="vectors", vector_source=part.split(":", 1)[1]))
        else:
            raise TrrError(f"unknown method {part!r}")
    if not methods:
        raise TrrError("no methods given")
    return methods


def _eval_data(args) -> EvalData:
    records = load_dataset(args.data)
    feature_maps = {}
    if getattr(args, "features", None):
        feature_maps = read_feature_dir(args.features)
    return EvalData(records=records, feature_maps=feature_maps)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_encode(args) -> int:
    files = sorted(Path(args.features).glob("*.trrf"))
    if not files:
        print(f"error: no feature files in {args.features}", file=sys.stderr)
        return 2
    feature_maps = [read_feature_file(f) for f in files]
    method = args.method or "trr"
    layers = _parse_layers(args.layers)
    if method == "trr":
        proj = _load_projection(args, feature_maps[0].channel_count)

        def encode(fm):
            return fm.item_id, trr_encode(fm, proj, layers).values
    elif method == "meanpool":
        def encode(fm):
            layer = args.pool_layer if args.pool_layer is not None else fm.layer_indices[-1]
            return fm.item_id, mean_pool_encode(fm, layer).values
    else:
        raise TrrError(f"unknown encode method {method!r}")

    jobs = args.jobs or 1
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(encode, feature_maps))
    else:
        pairs = [encode(fm) for fm in feature_maps]
    entries = dict(pairs)
    store_path = Path(args.store) if args.store else Path(args.out) / f"embeddings_{method}.json"
    write_store(entries, "TRR" if method == "trr" else "MeanPool", store_path,
                _resolved_config(args))
    print(f"wrote {len(entries)} embeddings to {store_path}")
    return 0


def cmd_build_kb(args) -> int:
    records = load_dataset(args.data)
    out_path = Path(args.store) if args.store else Path(args.out) / "kb.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    serialize_dataset(records, out_path)
    paths = {r.resolved_audio_path for r in records}
    vector_sources = sorted({name for r in records for name in r.cached_vectors})
    print(f"{len(records)} records, {len(paths)} distinct audio paths, "
          f"cached vector sources: {vector_sources or 'none'}")
    print(f"wrote normalized dataset to {out_path}")
    return 0


def cmd_split(args) -> int:
    records = load_dataset(args.data)
    grouping = args.grouping or "resolved_audio_path"
    fraction = args.test_fraction if args.test_fraction is not None else 0.16
    split = build_split(records, grouping=grouping, test_fraction=fraction, seed=args.seed)
    out_path = Path(args.store) if args.store else Path(args.out) / "split.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_split(split, out_path)
    print(f"test {len(split.test_ids)} / kb {len(split.kb_ids)} "
          f"(grouping={grouping}, seed={args.seed})")
    print(f"wrote split to {out_path}")
    return 0


def cmd_audit_split(args) -> int:
    records = load_dataset(args.data)
    split = load_split(args.split)
    ranges = load_ranges(args.ranges) if args.ranges else None
    report = audit_split(split, records, ranges=ranges, tau=args.tau)
    payload = {"audit": report.to_dict(), "config": _resolved_config(args)}
    _write_json(payload, Path(args.out) / "audit.json")
    print(f"shared group keys across split: {report.shared_path_count}")
    if report.near_duplicate_pairs is not None:
        print(f"near-duplicate cross-split pairs (tau={report.tau}): "
              f"{report.near_duplicate_pairs}")
    return 0


def _fusion_from_args(args) -> FusionConfig:
    return FusionConfig(
        w_text=args.w_text if args.w_text is not None else 0.5,
        w_audio=args.w_audio if args.w_audio is not None else 0.5,
        vague_threshold=args.vague_threshold if args.vague_threshold is not None else 0.05,
        audio_norm_threshold=(
            args.audio_norm_threshold if args.audio_norm_threshold is not None else 1e-3
        ),
    )


def cmd_query(args) -> int:
    if not args.text and not args.feature_file:
        print("error: give --text and/or --feature-file", file=sys.stderr)
        return 2
    records = load_dataset(args.data)
    by_id = {r.record_id: r for r in records}
    text_index = build_text_index(records)

    query_vec = None
    audio_index = None
    if args.feature_file:
        fm = read_feature_file(args.feature_file)
        if not args.store:
            print("error: --feature-file needs --store with KB embeddings", file=sys.stderr)
            return 2
        source, entries = load_store(Path(args.store))
        audio_index = build_embedding_index(source, entries)
        proj = _load_projection(args, fm.channel_count)
        query_vec = trr_encode(fm, proj, _parse_layers(args.layers)).values

    k = args.k or 1
    if args.text and query_vec is not None:
        ranked = fused_top_k(text_index, audio_index, args.text, query_vec,
                             _fusion_from_args(args), k)
    elif query_vec is not None:
        ranked = fused_top_k(text_index, audio_index, None, query_vec,
                             _fusion_from_args(args), k)
    else:
        scores = score_all(text_index, args.text)
        ids = sorted(scores)
        arr = np.array([scores[rid] for rid in ids])
        order = np.argsort(-arr, kind="stable")[:k]
        from .retrieval import RankedResult

        ranked = RankedResult(items=tuple((ids[i], float(arr[i])) for i in order),
                              effective_weights=(1.0, 0.0))

    if ranked.effective_weights is not None:
        w_text, w_audio = ranked.effective_weights
        print(f"effective weights: w_text={w_text:.3f} w_audio={w_audio:.3f}")
    for rank, (rid, score) in enumerate(ranked.items, start=1):
        print(f"{rank:2d}. {rid}  score={score:.6f}  style={by_id[rid].style!r}")
    top = by_id[ranked.top_id]
    print("top-1 parameters:")
    print(json.dumps(top.parameters, indent=2, sort_keys=True))
    if args.ranges:
        ranges = load_ranges(args.ranges)
        report = validate_feasible(flatten(top.parameters), ranges)
        status = "pass" if report.passed else "FAIL"
        print(f"feasibility: {status} ({report.checked_keys} keys checked, "
              f"{len(report.violations)} violations)")
        for violation in report.violations:
            print(f"  - {violation}")
    return 0


def _protocol_a_config(args, data: EvalData) -> ProtocolAConfig:
    input_dim = data.feature_maps[next(iter(data.feature_maps))].channel_count \
        if data.feature_maps else 0
    methods = _parse_methods(args.methods or "trr,meanpool,text", args, input_dim)
    ranges = load_ranges(args.ranges) if args.ranges else None
    return ProtocolAConfig(
        split=load_split(args.split),
        methods=methods,
        k=args.k or 1,
        ranges=ranges,
        seed=args.seed,
        bootstrap_resamples=args.bootstrap_resamples or 10_000,
        permutation_resamples=args.permutation_resamples or 100_000,
    )


def cmd_eval(args) -> int:
    data = _eval_data(args)
    cfg = _protocol_a_config(args, data)
    report = run_protocol_a(cfg, data)
    payload = report.to_dict()
    payload["config"].update(_resolved_config(args))
    _write_json(payload, Path(args.out) / "eval.json")
    print(render_table(report))
    print(f"wrote report to {Path(args.out) / 'eval.json'}")
    return 0


def cmd_ablate(args) -> int:
    data = _eval_data(args)
    kind = args.kind
    if kind == "projection_dim":
        grid = [int(x) for x in (args.grid or "32,64,128,256").replace(" ", "").split(",")]
    elif kind == "layer_set":
        grid = [tuple(int(x) for x in part.split(",")) for part in
                (args.grid or "4;5;6;4,5;5,6;4,5,6").replace(" ", "").split(";")]
    elif kind == "projection_type":
        grid = (args.grid or "random,pca").replace(" ", "").split(",")
    else:
        raise TrrError(f"unknown ablation kind {kind!r}")
    cfg = AblationConfig(
        split=load_split(args.split),
        projection_seed=args.seed,
        output_dim=args.output_dim or DEFAULT_OUTPUT_DIM,
        layers=_parse_layers(args.layers),
        ranges=load_ranges(args.ranges) if args.ranges else None,
        k=args.k or 1,
    )
    report = run_ablation(kind, grid, data, cfg)
    payload = report.to_dict()
    payload["config"].update(_resolved_config(args))
    _write_json(payload, Path(args.out) / f"ablation_{kind}.json")
    for point in report.points:
        label = {k: v for k, v in point.items()
                 if k not in ("aggregates", "defined_counts", "n", "embedding_dim")}
        aggs = {m: (f"{v:.4f}" if v is not None else "--")
                for m, v in point["aggregates"].items()}
        print(f"{label}  n={point['n']}  {aggs}")
    return 0


def cmd_dedup_sweep(args) -> int:
    data = _eval_data(args)
    cfg = _protocol_a_config(args, data)
    taus = _parse_floats(args.taus or "0.005,0.01,0.02,0.05")
    report = run_dedup_sweep(taus, data, cfg)
    payload = report.to_dict()
    payload["config"].update(_resolved_config(args))
    _write_json(payload, Path(args.out) / "dedup_sweep.json")
    for entry in report.entries:
        print(f"tau={entry['tau']}: kb_size={entry['kb_size']}")
    return 0


def cmd_profile(args) -> int:
    data = _eval_data(args)
    split = load_split(args.split)
    input_dim = data.feature_maps[next(iter(data.feature_maps))].channel_count
    proj = _load_projection(args, input_dim)
    cfg = ProtocolCConfig(
        split=split,
        projection=proj,
        layers=_parse_layers(args.layers),
        fusion=_fusion_from_args(args),
        seed=args.seed,
        k=args.k or 1,
    )
    clock = FakeClock(args.fake_clock) if args.fake_clock else None
    profile = run_latency_profile(
        list(split.test_ids), data, cfg,
        warmups=args.warmups if args.warmups is not None else 5,
        repeats=args.repeats if args.repeats is not None else 3,
        clock=clock,
    )
    payload = profile.to_dict()
    payload["config"].update(_resolved_config(args))
    _write_json(payload, Path(args.out) / "latency_profile.json")
    print(f"pool: {profile.pool_size} timed runs "
          f"({profile.n_queries} queries x {profile.repeats} repeats)")
    for name, stats in profile.components.items():
        print(f"{name:>14}: median {stats['median_ms']:.3f} ms, "
              f"p95 {stats['p95_ms']:.3f} ms")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sub.add_argument("--jobs", type=int, default=None, help="worker pool width")
    sub.add_argument("--config", help="JSON file supplying defaults for unset flags")
    sub.add_argument("--out", default=None, help="output directory (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trr", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("encode", help="encode .trrf feature files into an embedding store")
    p.add_argument("--features", required=True, help="directory of .trrf files")
    p.add_argument("--method", choices=("trr", "meanpool"), default=None)
    p.add_argument("--proj", help=".trrp projection sidecar (created if missing)")
    p.add_argument("--layers", default=None, help="comma-separated layer set")
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--pool-layer", type=int, default=None)
    p.add_argument("--store", default=None, help="output store path")
    _add_common(p)
    p.set_defaults(func=cmd_encode)

    p = subs.add_parser("build-kb", help="validate a dataset and write a normalized copy")
    p.add_argument("--data", required=True)
    p.add_argument("--store", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_build_kb)

    p = subs.add_parser("split", help="build a leakage-free group split")
    p.add_argument("--data", required=True)
    p.add_argument("--grouping", choices=("resolved_audio_path", "song_name"), default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--store", default=None, help="output split path")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = subs.add_parser("audit-split", help="audit a split for leakage")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--ranges", default=None)
    p.add_argument("--tau", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_audit_split)

    p = subs.add_parser("query", help="retrieve presets for a text and/or audio query")
    p.add_argument("--data", required=True)
    p.add_argument("--store", default=None, help="KB embedding store (audio side)")
    p.add_argument("--text", default=None)
    p.add_argument("--feature-file", default=None, help="query .trrf file")
    p.add_argument("--proj", default=None)
    p.add_argument("--layers", default=None)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--ranges", default=None)
    p.add_argument("--w-text", type=float, default=None)
    p.add_argument("--w-audio", type=float, default=None)
    p.add_argument("--vague-threshold", type=float, default=None)
    p.add_argument("--audio-norm-threshold", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_query)

    def add_eval_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--split", required=True)
        p.add_argument("--features", default=None, help="directory of .trrf files")
        p.add_argument("--ranges", default=None)
        p.add_argument("--methods", default=None,
                       help="comma list: trr,meanpool,text,vectors:<source>")
        p.add_argument("--proj", default=None)
        p.add_argument("--layers", default=None)
        p.add_argument("--output-dim", type=int, default=None)
        p.add_argument("--pool-layer", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--bootstrap-resamples", type=int, default=None)
        p.add_argument("--permutation-resamples", type=int, default=None)
        _add_common(p)

    p = subs.add_parser("eval", help="run the retrieval benchmark")
    add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("ablate", help="run one ablation grid")
    p.add_argument("--kind", required=True,
                   choices=("projection_dim", "layer_set", "projection_type"))
    p.add_argument("--grid", default=None,
                   help="dims '32,64'; layer sets '4;5;4,5'; types 'random,pca'")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--ranges", default=None)
    p.add_argument("--layers", default=None)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("dedup-sweep", help="near-duplicate sensitivity sweep")
    p.add_argument("--taus", default=None, help="comma list of thresholds")
    add_eval_flags(p)
    p.set_defaults(func=cmd_dedup_sweep)

    p = subs.add_parser("profile", help="latency profile of the local retrieval path")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--proj", default=None)
    p.add_argument("--layers", default=None)
    p.add_argument("--output-dim", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--warmups", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--fake-clock", type=float, default=None,
                   help="use a deterministic clock with this step (seconds)")
    p.add_argument("--w-text", type=float, default=None)
    p.add_argument("--w-audio", type=float, default=None)
    p.add_argument("--vague-threshold", type=float, default=None)
    p.add_argument("--audio-norm-threshold", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_profile)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and getattr(args, attr) is None:
                setattr(args, attr, value)
    if getattr(args, "seed", None) is None:
        args.seed = 0
    if getattr(args, "out", None) is None:
        args.out = "."


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return args.func(args)
    except (TrrError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:  # pragma: no cover
        return 0
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
