"""Residual scoring functions in normalized form (rho(0) = 1, rho(inf) = 0), posteriors and IRLS weights."""
from __future__ import annotations
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import special

from ..core import ConfigError
from ..distributions import MarginalizedChiSpec, magsac_rho, marginalized_inlier_density

logger = logging.getLogger(__name__)


class Family(str, Enum):
    RANSAC = "ransac"
    MSAC = "msac"
    GAU_MARGINAL = "gau_marginal"
    GAU_PROFILE = "gau_profile"
    MAGSAC = "magsac"
    LEARNED = "learned"


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Discretized score w_k over K bins of width tau_max / K."""

    tau_max: float
    weights: np.ndarray
    informative: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size < 2:
            raise ConfigError("a score table needs K >= 2 bins")
        if not self.tau_max > 0:
            raise ConfigError("tau_max must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tau_max", float(self.tau_max))

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def delta(self) -> float:
        return self.tau_max / self.K

    @property
    def centers(self) -> np.ndarray:
        return bin_centers(self.tau_max, self.K)


def bin_centers(tau_max: float, K: int) -> np.ndarray:
    return (np.arange(K) + 0.5) * (tau_max / K)


@dataclass(frozen=True, eq=False)
class ScoreSpec:
    family: Family
    tau: float
    sigma: Optional[float] = None   # GaU scale, defaults to tau
    nu: int = 4                     # MAGSAC degrees of freedom
    table: Optional[ScoreTable] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", float(self.tau))
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.family is Family.LEARNED and self.table is None:
            raise ConfigError("the learned family needs a score table")

    def with_tau(self, tau: float) -> "ScoreSpec":
        """Same family at another threshold; sigma keeps its ratio to tau."""
        ratio = self.sigma / self.tau
        return ScoreSpec(self.family, tau, ratio * tau, self.nu, self.table)

    @cached_property
    def magsac(self) -> MarginalizedChiSpec:
        return MarginalizedChiSpec.for_threshold(self.nu, self.tau)

    @property
    def beta(self) -> float:
        """smax(tau^2 / 2 sigma^2, 0), the GaU normalizer."""
        return float(smax(0.5 * self.tau ** 2 / self.sigma ** 2, 0.0))


def smax(x, y):
    """log(e^x + e^y) without overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.maximum(x, y)
    with np.errstate(invalid="ignore"):
        d = np.where(np.isfinite(m), -np.abs(x - y), -np.inf)
    out = m + np.log1p(np.exp(d))
    return out[()] if out.ndim == 0 else out


def _gau_z(spec: ScoreSpec, r):
    return (spec.tau ** 2 - r * r) / (2.0 * spec.sigma ** 2)


def _learned_rho(table: ScoreTable, r):
    out = np.interp(r, table.centers, table.weights)
    return np.where(r < table.tau_max, out, 0.0)


def _learned_slope(table: ScoreTable, r):
    c, w = table.centers, table.weights
    k = np.searchsorted(c, r, side="right") - 1
    inside = (k >= 0) & (k < c.size - 1)
    kk = np.clip(k, 0, c.size - 2)
    slope = (w[kk + 1] - w[kk]) / (c[kk + 1] - c[kk])
    return np.where(inside, slope, 0.0)


def rho(spec: ScoreSpec, r):
    """Normalized score of residual(s) r."""
    r = np.asarray(r, dtype=float)
    f = spec.family
    if f is Family.RANSAC:
        out = (r < spec.tau).astype(float)
    elif f in (Family.MSAC, Family.GAU_PROFILE):
        with np.errstate(invalid="ignore"):
            out = np.maximum(1.0 - (r / spec.tau) ** 2, 0.0)
        out = np.where(np.isfinite(r), out, 0.0)
    elif f is Family.GAU_MARGINAL:
        with np.errstate(invalid="ignore", over="ignore"):
            out = smax(_gau_z(spec, r), 0.0) / spec.beta
    elif f is Family.MAGSAC:
        m = spec.magsac
        out = 1.0 - magsac_rho(m, r) / (m.sigma_bar * m.rho_inf)
    else:
        out = _learned_rho(spec.table, r)
    return out[()] if np.ndim(out) == 0 else out


def inlier_posterior(spec: ScoreSpec, r):
    """P(inlier | r) under the Gaussian-uniform mixture, sigm((tau^2 - r^2) / 2 sigma^2)."""
    if spec.family is not Family.GAU_MARGINAL:
        raise ConfigError(f"inlier posterior is defined for gau_marginal only, got {spec.family.value}")
    r = np.asarray(r, dtype=float)
    return special.expit(_gau_z(spec, r))


def irls_weight(spec: ScoreSpec, r):
    """-rho'(r) / r of the normalized score; inner derivative at kinks."""
    r = np.asarray(r, dtype=float)
    f = spec.family
    if f is Family.RANSAC:
        out = np.zeros_like(r)
    elif f in (Family.MSAC, Family.GAU_PROFILE):
        out = np.where(r <= spec.tau, 2.0 / spec.tau ** 2, 0.0)
    elif f is Family.GAU_MARGINAL:
        out = special.expit(_gau_z(spec, r)) / (spec.sigma ** 2 * spec.beta)
    elif f is Family.MAGSAC:
        m = spec.magsac
        out = marginalized_inlier_density(m, r) / (m.sigma_bar * abs(m.rho_inf))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, -_learned_slope(spec.table, r) / r, 0.0)
    return out[()] if np.ndim(out) == 0 else out


def inlier_count(r, tau: float) -> int:
    return int(np.count_nonzero(np.asarray(r) < tau))


def mixture_rho(log_inlier_density: Callable[[np.ndarray], np.ndarray], gamma: float, alpha: float,
                r, profile: bool = False):
    """Normalized score of a two-component mixture with inlier density p_in and uniform outliers alpha.

    Marginal form log(gamma p_in + (1 - gamma) alpha); profile form takes the max
    of the two terms instead. Normalized so that r = 0 maps to 1 and p_in -> 0 maps to 0.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    comb = np.maximum if profile else smax
    b = np.log1p(-gamma) + np.log(alpha)

    def q(x):
        with np.errstate(divide="ignore"):
            return comb(np.log(gamma) + log_inlier_density(np.asarray(x, dtype=float)), b)

    top = q(0.0)
    if not top > b:
        raise ConfigError("inlier term does not dominate at r = 0")
    return (q(r) - b) / (top - b)
