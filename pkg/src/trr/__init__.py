"""Texture-aware audio preset retrieval and its evaluation harness.

The library covers the full local retrieval path over cached feature maps:
binary feature containers, Gram-matrix texture embeddings and the mean-pooled
baseline, a preset knowledge base with leakage-free splits, lexical and
cosine retrieval with quality-gated fusion, parameter-space metrics, paired
statistics, and the experiment drivers that tie them together.
"""

__version__ = "0.1.0"

from .errors import TrrError
from .feature_io import (
    FeatureMapSet,
    LayerFeatures,
    make_feature_map,
    read_feature_dir,
    read_feature_file,
    write_feature_file,
)
from .encoder import (
    DEFAULT_LAYERS,
    DEFAULT_OUTPUT_DIM,
    PooledEmbedding,
    ProjectionSpec,
    TextureEmbedding,
    fit_pca_projection,
    make_random_projection,
    mean_pool_encode,
    read_projection,
    trr_encode,
    write_projection,
)
from .knowledge_base import (
    AuditReport,
    ParamRanges,
    PresetRecord,
    SplitSpec,
    audit_split,
    build_split,
    load_dataset,
    load_ranges,
    load_split,
    near_duplicate_filter,
    save_split,
    serialize_dataset,
)
from .text_index import LexicalIndex, build_text_index, text_confidence, text_score, tokenize
from .retrieval import (
    EmbeddingIndex,
    FusionConfig,
    RankedResult,
    build_embedding_index,
    cosine_top_k,
    fused_top_k,
)
from .param_metrics import (
    MetricReport,
    ValidationReport,
    acc_at,
    active_recall,
    cosine_metric,
    evaluate_pair,
    flatten,
    l2_error,
    module_jaccard,
    normalized_l2,
    validate_feasible,
)
from .stats import (
    ComparisonReport,
    PairedSample,
    WinLossTie,
    bootstrap_ci,
    cohens_d_paired,
    compare,
    holm_correct,
    permutation_test,
    win_loss_tie,
)
from .protocols import (
    AblationConfig,
    AblationReport,
    DegradationReport,
    DegradationScenario,
    EvalData,
    EvalReport,
    FakeClock,
    LatencyProfile,
    MethodSpec,
    ProtocolAConfig,
    ProtocolCConfig,
    render_table,
    run_ablation,
    run_dedup_sweep,
    run_latency_profile,
    run_protocol_a,
    run_protocol_c,
)

__all__ = [name for name in dir() if not name.startswith("_")]
