"""Spatio-temporal tensor analysis toolkit.

CP decomposition by alternating least squares with interchangeable
initializers (random, HOSVD, spatial principal components), per-mode
k-means clustering with silhouette scoring, seasonal rank-correlation
statistics, and a binary tensor format with a synthetic benchmark
generator.
"""

__version__ = "0.1.0"

from .clustering import ClusterResult, KSweepResult, kmeans, silhouette, sweep_k
from .cpd import AlsOptions, AlsTrace, cp_als, init_hosvd, init_random
from .errors import FormatError, NumericError, ToolkitError
from .io import (
    DatasetDescriptor,
    GridSpec,
    SyntheticConfig,
    SyntheticTruth,
    generate_synthetic,
    load_binary,
    load_csv_long,
    save_binary,
)
from .stats import (
    SEASONS,
    SeasonMask,
    TimeIndex,
    correlation_map,
    season_masks,
    seasonal_acf,
    spearman,
)
from .stpca import (
    FourierBasis,
    FunctionalCoefficients,
    SpatialWeights,
    StpcaOptions,
    StpcaResult,
    build_fourier_basis,
    build_grid_weights,
    fit_coefficients,
    moran_operator,
    morans_index,
    stpca,
    stpca_to_cp_init,
)
from .tensor import (
    CpModel,
    DenseTensor3,
    cp_reconstruct,
    fold,
    khatri_rao,
    normalize_model,
    relative_error,
    unfold,
)

__all__ = [
    "__version__",
    "AlsOptions",
    "AlsTrace",
    "ClusterResult",
    "CpModel",
    "DatasetDescriptor",
    "DenseTensor3",
    "FormatError",
    "FourierBasis",
    "FunctionalCoefficients",
    "GridSpec",
    "KSweepResult",
    "NumericError",
    "SEASONS",
    "SeasonMask",
    "SpatialWeights",
    "StpcaOptions",
    "StpcaResult",
    "SyntheticConfig",
    "SyntheticTruth",
    "TimeIndex",
    "ToolkitError",
    "build_fourier_basis",
    "build_grid_weights",
    "correlation_map",
    "cp_als",
    "cp_reconstruct",
    "fit_coefficients",
    "fold",
    "generate_synthetic",
    "init_hosvd",
    "init_random",
    "khatri_rao",
    "kmeans",
    "load_binary",
    "load_csv_long",
    "moran_operator",
    "morans_index",
    "normalize_model",
    "relative_error",
    "save_binary",
    "season_masks",
    "seasonal_acf",
    "silhouette",
    "spearman",
    "stpca",
    "stpca_to_cp_init",
    "sweep_k",
    "unfold",
]
