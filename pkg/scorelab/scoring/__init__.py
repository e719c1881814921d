from .functions import (
    Family,
    ScoreSpec,
    ScoreTable,
    inlier_count,
    inlier_posterior,
    irls_weight,
    mixture_rho,
    rho,
    smax,
)
from .histogram import (
    ResidualHistogram,
    bin_edges,
    build_score_table,
    histogram_matrix,
    histogram_residuals,
    score_from_histogram,
    select_best,
    sweep_matrix,
    sweep_scores,
    weight_matrix,
)

__all__ = [
    "Family",
    "ScoreSpec",
    "ScoreTable",
    "ResidualHistogram",
    "smax",
    "rho",
    "inlier_posterior",
    "irls_weight",
    "inlier_count",
    "mixture_rho",
    "bin_edges",
    "build_score_table",
    "histogram_residuals",
    "histogram_matrix",
    "score_from_histogram",
    "sweep_scores",
    "sweep_matrix",
    "weight_matrix",
    "select_best",
]
