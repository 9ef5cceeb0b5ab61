"""Desk-scale lab for CABB-aware conversion attribution.

Builds category-similarity weights from session co-engagement, trains a
two-head (same-item / cross-item) conversion model with a similarity-weighted
loss, and reproduces the qualitative experiment grid (baselines, lambda sweep,
weighting-scheme ablation, feature importance) on seeded synthetic corpora
with known ground truth.
"""

__version__ = "0.1.0"

from cabblab.config import ConfigError, RunConfig, load_run_config
from cabblab.corpus import (
    CatalogEntry,
    Corpus,
    CorpusError,
    Event,
    StatsReport,
    corpus_stats,
    parse_corpus,
    serialize_catalog,
    serialize_events,
)
from cabblab.synth import (
    GroundTruth,
    SynthConfig,
    generate_synthetic,
    parse_ground_truth,
    ring_affinity,
    serialize_ground_truth,
)
from cabblab.taxonomy import Taxonomy, TaxonomyError, build_taxonomy, serialize_taxonomy
from cabblab.similarity import (
    EventWeights,
    ItemI2I,
    SimilarityMatrix,
    Static1,
    TaxonomyCF,
    alpha,
    build_engagement_vectors,
    build_item_vectors,
    build_similarity_matrix,
    cosine,
    parse_similarity,
    serialize_similarity,
)
from cabblab.labeling import (
    FEATURE_NAMES,
    ClickExample,
    DatasetArrays,
    FeatureConfig,
    HistoryIndex,
    apply_scheme_alphas,
    build_dataset,
    dataset_arrays,
    extract_features,
    last_click_labels,
    partition_labels,
)
from cabblab.model import (
    HEAD_CABA,
    HEAD_CABB,
    Architecture,
    Gradients,
    LossBreakdown,
    ModelParams,
    TrainConfig,
    TrainMode,
    batch_loss,
    forward,
    gradients,
    init_params,
    load_checkpoint,
    permutation_importance,
    predict_arrays,
    save_checkpoint,
    train,
)
from cabblab.evaluation import (
    DegenerateLabelsError,
    ExperimentReport,
    NEResult,
    ReportRow,
    TaskNEBreakdown,
    baseline_comparison,
    lambda_sweep,
    normalized_entropy,
    scheme_comparison,
    split_sessions,
    task_ne_breakdown,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "CatalogEntry",
    "Corpus",
    "CorpusError",
    "Event",
    "StatsReport",
    "corpus_stats",
    "parse_corpus",
    "serialize_catalog",
    "serialize_events",
    "GroundTruth",
    "SynthConfig",
    "generate_synthetic",
    "parse_ground_truth",
    "ring_affinity",
    "serialize_ground_truth",
    "Taxonomy",
    "TaxonomyError",
    "build_taxonomy",
    "serialize_taxonomy",
    "EventWeights",
    "ItemI2I",
    "SimilarityMatrix",
    "Static1",
    "TaxonomyCF",
    "alpha",
    "build_engagement_vectors",
    "build_item_vectors",
    "build_similarity_matrix",
    "cosine",
    "parse_similarity",
    "serialize_similarity",
    "FEATURE_NAMES",
    "ClickExample",
    "DatasetArrays",
    "FeatureConfig",
    "HistoryIndex",
    "apply_scheme_alphas",
    "build_dataset",
    "dataset_arrays",
    "extract_features",
    "last_click_labels",
    "partition_labels",
    "HEAD_CABA",
    "HEAD_CABB",
    "Architecture",
    "Gradients",
    "LossBreakdown",
    "ModelParams",
    "TrainConfig",
    "TrainMode",
    "batch_loss",
    "forward",
    "gradients",
    "init_params",
    "load_checkpoint",
    "permutation_importance",
    "predict_arrays",
    "save_checkpoint",
    "train",
    "DegenerateLabelsError",
    "ExperimentReport",
    "NEResult",
    "ReportRow",
    "TaskNEBreakdown",
    "baseline_comparison",
    "lambda_sweep",
    "normalized_entropy",
    "scheme_comparison",
    "split_sessions",
    "task_ne_breakdown",
]
