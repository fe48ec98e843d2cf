"""Blind image quality assessment from gradient and normalized-luminance statistics.

Pipeline: load a grayscale plane, extract 27 natural-scene-statistics
features (9 multiscale gradient variances + 2 GGD + 16 AGGD parameters),
and score them with a small tanh feedforward network trained by scaled
conjugate gradient against subjective or proxy quality targets.
"""

__version__ = "0.1.0"

from .distortions import DistortionSpec, generate_dataset, procedural_reference
from .errors import GradiqaError
from .evaluation import (
    EvaluationReport,
    ManifestRecord,
    evaluate,
    ingest_live_r2,
    kendall,
    pearson,
    read_manifest,
    spearman,
    write_manifest,
)
from .features import (
    DEFAULT_CONFIG,
    FEATURE_COUNT,
    FeatureConfig,
    NormalizationStats,
    apply_normalizer,
    extract_features,
    fit_normalizer,
    read_features_csv,
    write_features_csv,
)
from .network import (
    NetworkModel,
    ScgOptimizer,
    TrainConfig,
    TrainHistory,
    forward,
    load_model,
    loss_and_gradient,
    predict_batch,
    save_model,
    train_scg,
)
from .raster import convolve_same, downsample_half, load_grayscale, write_pgm

__all__ = [
    "__version__",
    "GradiqaError",
    "DistortionSpec",
    "generate_dataset",
    "procedural_reference",
    "EvaluationReport",
    "ManifestRecord",
    "evaluate",
    "ingest_live_r2",
    "kendall",
    "pearson",
    "spearman",
    "read_manifest",
    "write_manifest",
    "DEFAULT_CONFIG",
    "FEATURE_COUNT",
    "FeatureConfig",
    "NormalizationStats",
    "apply_normalizer",
    "extract_features",
    "fit_normalizer",
    "read_features_csv",
    "write_features_csv",
    "NetworkModel",
    "ScgOptimizer",
    "TrainConfig",
    "TrainHistory",
    "forward",
    "load_model",
    "loss_and_gradient",
    "predict_batch",
    "save_model",
    "train_scg",
    "convolve_same",
    "downsample_half",
    "load_grayscale",
    "write_pgm",
]
