"""Dense CRF refinement and Bayesian voxel fusion of material labels."""

from ._core import (
    IGNORE_LABEL,
    Backend,
    ConfigError,
    CrfParams,
    FormatError,
    InvalidInput,
    IoError,
    MatfuseError,
    NumericalError,
    Precision,
    SizeError,
    bayes_update,
    crf_energy,
    filter,
    generate_synthetic,
    load_unary,
    map_labeling,
    mean_field_infer,
    run_pipeline,
    save_unary,
    segmentation_metrics,
    softmax,
    unary_from_probabilities,
)

__all__ = [
    "IGNORE_LABEL",
    "Backend",
    "ConfigError",
    "CrfParams",
    "FormatError",
    "InvalidInput",
    "IoError",
    "MatfuseError",
    "NumericalError",
    "Precision",
    "SizeError",
    "bayes_update",
    "crf_energy",
    "filter",
    "generate_synthetic",
    "load_unary",
    "map_labeling",
    "mean_field_infer",
    "run_pipeline",
    "save_unary",
    "segmentation_metrics",
    "softmax",
    "unary_from_probabilities",
]
