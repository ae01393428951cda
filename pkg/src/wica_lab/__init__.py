"""Weighted-independence nonlinear ICA toolkit.

The package turns the weighted independence index (wii) into a training
objective: synthesize independent sources, scramble them with an exactly
invertible nonlinear mixing, fit an autoencoder whose cost adds the wii
of the encoded batch to the reconstruction error, and score the encoder
output against the true sources with permutation-matched rank
correlations.
"""

from .core import (
    Dataset,
    RngStream,
    WeightedSample,
    load_csv,
    normalize_componentwise,
    pearson_corr_matrix,
    polar_orthogonal,
    sample_haar_orthogonal,
    save_csv,
    spearman_corr,
    weighted_cov,
    weighted_mean,
)
from .datagen import KINDS, SourceSpec, generate
from .errors import (
    DegenerateColumnError,
    DegenerateWeightsError,
    DimensionError,
    FileFormatError,
    InsufficientDataError,
    NonFiniteError,
    NumericalError,
    TrainingDivergedError,
    WeightCollapseError,
    WicaError,
)
from .metrics import ScoreReport, load_report, max_corr, ots, save_report, score, solve_assignment
from .mixer import (
    CouplingNet,
    MixingPipeline,
    MixingStage,
    build_pipeline,
    load_pipeline,
    mix,
    save_pipeline,
    unmix_exact,
)
from .trainer import (
    AutoEncoderModel,
    MlpParams,
    TrainConfig,
    TrainTrace,
    cost_gradient,
    encode,
    load_model,
    load_trace,
    rec_error,
    save_model,
    save_trace,
    train,
    wica_cost,
)
from .wii import (
    WiiConfig,
    concentration,
    gaussian_log_weights,
    wii_at_point,
    wii_index,
    wii_multi,
)

__version__ = "0.1.0"

__all__ = [
    "AutoEncoderModel",
    "CouplingNet",
    "Dataset",
    "DegenerateColumnError",
    "DegenerateWeightsError",
    "DimensionError",
    "FileFormatError",
    "InsufficientDataError",
    "KINDS",
    "MixingPipeline",
    "MixingStage",
    "MlpParams",
    "NonFiniteError",
    "NumericalError",
    "RngStream",
    "ScoreReport",
    "SourceSpec",
    "TrainConfig",
    "TrainTrace",
    "TrainingDivergedError",
    "WeightCollapseError",
    "WeightedSample",
    "WicaError",
    "WiiConfig",
    "build_pipeline",
    "concentration",
    "cost_gradient",
    "encode",
    "gaussian_log_weights",
    "generate",
    "load_csv",
    "load_model",
    "load_pipeline",
    "load_report",
    "load_trace",
    "max_corr",
    "mix",
    "normalize_componentwise",
    "ots",
    "pearson_corr_matrix",
    "polar_orthogonal",
    "rec_error",
    "sample_haar_orthogonal",
    "save_csv",
    "save_model",
    "save_pipeline",
    "save_report",
    "save_trace",
    "score",
    "solve_assignment",
    "spearman_corr",
    "train",
    "unmix_exact",
    "weighted_cov",
    "weighted_mean",
    "wica_cost",
    "wii_at_point",
    "wii_index",
    "wii_multi",
]
