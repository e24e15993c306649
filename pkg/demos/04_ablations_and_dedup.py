"""Encoder ablations and the near-duplicate sensitivity sweep.

Sweeps the projection dimension, the layer set, and random-vs-PCA
projections, then shows how retrieval aggregates respond as near-duplicate
knowledge-base entries are removed at increasing distance thresholds.
"""

from trr import (
    AblationConfig,
    EvalData,
    MethodSpec,
    ProtocolAConfig,
    make_random_projection,
    run_ablation,
    run_dedup_sweep,
)
from trr.synthetic import make_texture_corpus

corpus = make_texture_corpus(n_kb=120, n_queries=40, channels=16, n_frames=30, seed=2)
data = EvalData(records=corpus.records, feature_maps=corpus.feature_maps)
abl_cfg = AblationConfig(split=corpus.split, projection_seed=0, output_dim=8,
                         layers=(4, 5, 6), ranges=corpus.ranges)


def show(title, report, label_key):
    print(f"\n{title}")
    for point in report.points:
        aggs = point["aggregates"]
        print(f"  {str(point[label_key]):>12}: l2={aggs['l2']:.4f} "
              f"acc={aggs['acc_at_0_1']:.4f} cos={aggs['cosine']:.4f} "
              f"(embedding dim {point['embedding_dim']})")


show("projection dimension d in {4, 8, 16, 32}:",
     run_ablation("projection_dim", [4, 8, 16, 32], data, abl_cfg), "projection_dim")

show("layer sets:",
     run_ablation("layer_set", [(4,), (5,), (6,), (4, 5), (5, 6), (4, 5, 6)],
                  data, abl_cfg), "layers")

show("projection type:",
     run_ablation("projection_type", ["random", "pca"], data, abl_cfg),
     "projection_type")

# Near-duplicate sweep: progressively drop KB entries closer than tau in
# normalized parameter space, re-evaluating at each threshold.
sweep_cfg = ProtocolAConfig(
    split=corpus.split,
    methods=[MethodSpec(kind="trr", projection=make_random_projection(16, 8, 0)),
             MethodSpec(kind="text")],
    ranges=corpus.ranges,
    with_comparisons=False,
)
sweep = run_dedup_sweep((0.005, 0.01, 0.02, 0.05), data, sweep_cfg)
print("\nnear-duplicate sensitivity sweep:")
for entry in sweep.entries:
    trr_l2 = entry["methods"]["TRR"]["aggregates"]["l2"]
    text_l2 = entry["methods"]["Text"]["aggregates"]["l2"]
    print(f"  tau={entry['tau']:<6}: kb size {entry['kb_size']:>4}, "
          f"TRR l2={trr_l2:.4f}, Text l2={text_l2:.4f}")
