"""Fusion quality gates under degraded inputs.

Three stress scenarios for the quality-aware fusion rule: vague text (the
text gate fires and ranking collapses onto audio), noisy audio with the gate
signal (collapses onto text), and an explicit text/audio conflict where
blending hurts and the report flags the failure.
"""

from trr import (
    DegradationScenario,
    EvalData,
    FusionConfig,
    ProtocolCConfig,
    make_random_projection,
    run_protocol_c,
)
from trr.synthetic import make_texture_corpus

corpus = make_texture_corpus(n_kb=120, n_queries=60, channels=16, n_frames=30, seed=1)
data = EvalData(records=corpus.records, feature_maps=corpus.feature_maps)
cfg = ProtocolCConfig(
    split=corpus.split,
    projection=make_random_projection(16, 8, 0),
    layers=(4, 5, 6),
    fusion=FusionConfig(w_text=0.5, w_audio=0.5, vague_threshold=0.05),
    seed=0,
)

for scenario in (
    DegradationScenario(kind="vague_text"),
    DegradationScenario(kind="noisy_audio", noise_sigma=5.0),
    DegradationScenario(kind="conflict", pairing_seed=3),
):
    report = run_protocol_c(scenario, data, cfg)
    print(f"\nscenario: {report.scenario}")
    for row in report.rows:
        weights = ""
        if row.mean_w_text is not None:
            weights = f"  (mean weights text={row.mean_w_text:.2f} audio={row.mean_w_audio:.2f})"
        print(f"  {row.name:>9}: mean L2 = {row.l2_mean:8.4f}{weights}")
    if scenario.kind == "vague_text":
        same = report.row("Fusion").retrieved == report.row("TRR-only").retrieved
        print(f"  -> fusion ranking identical to audio-only: {same}")
    elif scenario.kind == "noisy_audio":
        same = report.row("Fusion").retrieved == report.row("Text-only").retrieved
        print(f"  -> fusion ranking identical to text-only: {same}")
    else:
        print(f"  -> failure mode flagged: {report.fusion_underperforms}")
