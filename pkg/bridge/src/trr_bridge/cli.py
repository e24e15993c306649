"""Batch extraction CLI: audio files in, .trrf feature containers out."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import BridgeError, ExtractionConfig, extract_to_file, load_backbone

AUDIO_SUFFIXES = (".wav",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trr-extract", description=__doc__)
    parser.add_argument("--in", dest="inputs", required=True,
                        help="audio file or directory of audio files")
    parser.add_argument("--out", required=True, help="output directory for .trrf files")
    parser.add_argument("--layers", default="4,5,6,11",
                        help="comma-separated 0-based transformer layers")
    parser.add_argument("--min-seconds", type=float, default=1.0)
    parser.add_argument("--peak", type=float, default=0.95,
                        help="peak-normalization target")
    parser.add_argument("--model", default="facebook/wav2vec2-base")
    parser.add_argument("--random-weights", action="store_true",
                        help="seeded random backbone instead of pretrained weights "
                             "(offline use and testing)")
    parser.add_argument("--init-seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    source = Path(args.inputs)
    if source.is_dir():
        files = sorted(p for p in source.iterdir() if p.suffix.lower() in AUDIO_SUFFIXES)
    elif source.exists():
        files = [source]
    else:
        print(f"error: no such input {source}", file=sys.stderr)
        return 2
    if not files:
        print(f"error: no audio files in {source}", file=sys.stderr)
        return 2

    cfg = ExtractionConfig(
        model=args.model,
        layers=tuple(int(x) for x in args.layers.replace(" ", "").split(",") if x),
        min_seconds=args.min_seconds,
        peak_target=args.peak,
        random_weights=args.random_weights,
        init_seed=args.init_seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        model = load_backbone(cfg)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: could not load {cfg.model!r} ({exc}); "
              "use --random-weights when offline", file=sys.stderr)
        return 2

    failures = 0
    for file in files:
        try:
            out = extract_to_file(file, out_dir / f"{file.stem}.trrf", cfg, model=model)
            print(f"{file} -> {out}")
        except BridgeError as exc:
            failures += 1
            print(f"error: {exc}", file=sys.stderr)
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
