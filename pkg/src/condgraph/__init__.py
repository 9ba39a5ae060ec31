"""Dependence-graph recovery from multivariate data.

Two routes are provided: thresholding a matrix of rank/nearest-neighbour
conditional dependence coefficients (``ggm_recover``), and thresholding a
sparse precision-matrix estimate (``glasso`` + ``pg_select``). The
``simulate`` module holds the benchmark models and the TPR/FPR harness.
"""
from .codec import (
    DegenerateDenominatorError,
    DegenerateDimError,
    NeighborAssignment,
    codec_matrix,
    codec_tn,
    nearest_neighbors,
    neighbor_stream,
    ranks_desc,
)
from .core import (
    CondGraphError,
    DataMatrix,
    DepMatrix,
    DimensionMismatchError,
    DuplicateNameError,
    Graph,
    NonFiniteError,
    SelectionConfig,
    TooFewColsError,
    TooFewRowsError,
    ValidationError,
    graph_diff,
    graph_equal,
    validate_data,
)
from .precision import (
    NotConvergedError,
    PgConfig,
    PrecisionEstimate,
    SingularInputError,
    glasso,
    npn_skeptic,
    pg_select,
    ridge_precision,
    sample_covariance,
)
from .selection import (
    NegativeLambdaError,
    ThresholdedMatrix,
    ggm_recover,
    select_edges,
    soft_threshold,
    symmetrize_max,
    theorem3_band,
)
from .simulate import MetricsRecord, SimModel, generate, run_study, tpr_fpr, true_graph

__version__ = "0.1.0"
