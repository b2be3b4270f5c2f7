"""Kernel-based change-point detection for embedding sequences."""

__version__ = "0.1.0"

from .kernels import (
    EmbeddingSequence,
    GramMatrix,
    Kernel,
    KernelSpec,
    compute_gram,
    eval_kernel,
    median_heuristic_bandwidth,
)
from .cost import (
    GramPrefix,
    block_cost,
    build_prefix,
    expected_block_cost_stationary,
    mmd2_empirical,
)
from .segmentation import (
    PenaltySchedule,
    Segmentation,
    SegmentationResult,
    dp_fixed_k,
    dp_penalized,
    objective,
    pelt_penalized,
    penalty_floor,
    penalty_value,
)
from .metrics import (
    MetricReport,
    default_window,
    evaluate,
    location_error,
    pk,
    window_diff,
)
from .simulate import (
    ConcentrationReport,
    ExperimentReport,
    GeneratedSequence,
    SimConfig,
    auto_k,
    concentration_check,
    consistency_experiment,
    generate_m_dependent,
    sample_change_points,
    sweep_penalty,
)
from .ingest import (
    Dataset,
    DatasetEntry,
    EmbedServiceConfig,
    fetch_embeddings,
    load_csv_matrix,
    load_jsonl,
    normalize_rows,
    save_csv_matrix,
    save_jsonl,
)

__all__ = [
    "__version__",
    "EmbeddingSequence",
    "GramMatrix",
    "Kernel",
    "KernelSpec",
    "compute_gram",
    "eval_kernel",
    "median_heuristic_bandwidth",
    "GramPrefix",
    "block_cost",
    "build_prefix",
    "expected_block_cost_stationary",
    "mmd2_empirical",
    "PenaltySchedule",
    "Segmentation",
    "SegmentationResult",
    "dp_fixed_k",
    "dp_penalized",
    "objective",
    "pelt_penalized",
    "penalty_floor",
    "penalty_value",
    "MetricReport",
    "default_window",
    "evaluate",
    "location_error",
    "pk",
    "window_diff",
    "ConcentrationReport",
    "ExperimentReport",
    "GeneratedSequence",
    "SimConfig",
    "auto_k",
    "concentration_check",
    "consistency_experiment",
    "generate_m_dependent",
    "sample_change_points",
    "sweep_penalty",
    "Dataset",
    "DatasetEntry",
    "EmbedServiceConfig",
    "fetch_embeddings",
    "load_csv_matrix",
    "load_jsonl",
    "normalize_rows",
    "save_csv_matrix",
    "save_jsonl",
]
