"""Histogram scoring: Q = w'h for one table, W h for a whole threshold sweep."""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ConfigError, DiscretizationMismatchError
from .functions import ScoreSpec, ScoreTable, bin_centers, rho

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ResidualHistogram:
    tau_max: float
    counts: np.ndarray
    overflow: int = 0

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if c.size < 2:
            raise ConfigError("a histogram needs K >= 2 bins")
        if np.any(c < 0) or self.overflow < 0:
            raise ConfigError("counts must be non-negative")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "tau_max", float(self.tau_max))
        object.__setattr__(self, "overflow", int(self.overflow))

    @property
    def K(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.overflow


def _check_bins(tau_max: float, K: int):
    if int(K) != K or K < 2:
        raise ConfigError(f"K must be an integer >= 2, got {K}")
    if not (np.isfinite(tau_max) and tau_max > 0):
        raise ConfigError("tau_max must be positive")


def bin_edges(tau_max: float, K: int) -> np.ndarray:
    _check_bins(tau_max, K)
    return np.linspace(0.0, tau_max, K + 1)


def bin_index(r: np.ndarray, tau_max: float, K: int) -> np.ndarray:
    """Bin of each residual over half-open bins [lo, hi); K marks overflow (r >= tau_max or non-finite)."""
    edges = bin_edges(tau_max, K)
    r = np.asarray(r, dtype=float)
    idx = np.searchsorted(edges, r, side="right") - 1
    idx = np.where(np.isfinite(r) & (r < tau_max) & (idx >= 0), idx, K)
    return np.minimum(idx, K)


def histogram_residuals(rv, tau_max: float, K: int) -> ResidualHistogram:
    idx = bin_index(np.asarray(rv, dtype=float).reshape(-1), tau_max, K)
    full = np.bincount(idx, minlength=K + 1)
    return ResidualHistogram(tau_max, full[:K], int(full[K]))


def histogram_matrix(residuals: np.ndarray, tau_max: float, K: int):
    """Per-row histograms of an (m, n) residual matrix: counts (m, K) and overflow (m,)."""
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    m = residuals.shape[0]
    idx = bin_index(residuals, tau_max, K)
    flat = (np.arange(m)[:, None] * (K + 1) + idx).reshape(-1)
    full = np.bincount(flat, minlength=m * (K + 1)).reshape(m, K + 1)
    return full[:, :K], full[:, K]


def build_score_table(spec: ScoreSpec, tau_max: float, K: int) -> ScoreTable:
    """w_k = rho(spec, mu_k) at the bin centers."""
    _check_bins(tau_max, K)
    return ScoreTable(tau_max, rho(spec, bin_centers(tau_max, K)))


def _same_grid(a_tau: float, a_K: int, b_tau: float, b_K: int) -> bool:
    return a_K == b_K and math.isclose(a_tau, b_tau, rel_tol=1e-12, abs_tol=0.0)


def score_from_histogram(table: ScoreTable, hist: ResidualHistogram) -> float:
    if not _same_grid(table.tau_max, table.K, hist.tau_max, hist.K):
        raise DiscretizationMismatchError(
            f"table ({table.tau_max}, {table.K}) and histogram ({hist.tau_max}, {hist.K}) differ"
        )
    return float(table.weights @ hist.counts)


def weight_matrix(tables: Sequence[ScoreTable]) -> np.ndarray:
    """Stack tables into W (T, K); all tables must share the discretization."""
    if not tables:
        raise ConfigError("at least one table is required")
    first = tables[0]
    for t in tables[1:]:
        if not _same_grid(first.tau_max, first.K, t.tau_max, t.K):
            raise DiscretizationMismatchError("tables do not share tau_max and K")
    return np.stack([t.weights for t in tables])


def sweep_scores(tables: Sequence[ScoreTable], hist: ResidualHistogram) -> np.ndarray:
    W = weight_matrix(tables)
    if not _same_grid(tables[0].tau_max, tables[0].K, hist.tau_max, hist.K):
        raise DiscretizationMismatchError("tables and histogram do not share tau_max and K")
    return W @ hist.counts


def sweep_matrix(W: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Scores (m, T) of m histograms (m, K) under T tables (T, K)."""
    return np.asarray(counts, dtype=float) @ np.asarray(W, dtype=float).T


def select_best(scores: np.ndarray) -> np.ndarray:
    """Index of the best model per column of an (m, T) score matrix; first maximum wins."""
    return np.argmax(scores, axis=0)
