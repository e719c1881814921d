"""Chi, truncated-chi and scale-marginalized densities.

The scale-marginalized inlier density for a uniform prior on the noise scale
over [0, sigma_bar] and chi_nu residuals truncated at kappa * sigma is

    p_in(x; 1) = G(x, kappa, nu) / (sqrt(2) * gamma_low(nu/2, kappa^2/2))

with G(x, kappa, nu) = (Gamma((nu-1)/2, x^2/2) - Gamma((nu-1)/2, kappa^2/2)) [x < kappa].
Its score rho(r) = -int_0^r x p_in(x) dx has the closed form

    rho(x; 1) = (2 G(x, kappa, nu+2) - x^2 G(x, kappa, nu) - 2 G(0, kappa, nu+2))
                / (2 sqrt(2) gamma_low(nu/2, kappa^2/2))

and both obey p_in(r; s) = p_in(r/s; 1)/s and rho(r; s) = s rho(r/s; 1).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize, special

from .core import ConfigError

logger = logging.getLogger(__name__)

QUANTILE = 0.99


def upper_incomplete_gamma(s, x):
    """Gamma(s, x) for s >= 0, x >= 0; Gamma(0, x) is the exponential integral E1(x)."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(x))):
        raise ConfigError("upper_incomplete_gamma needs finite arguments")
    if np.any(s < 0) or np.any(x < 0):
        raise ConfigError("upper_incomplete_gamma needs s >= 0 and x >= 0")
    with np.errstate(divide="ignore"):
        out = np.where(s > 0, special.gammaincc(np.where(s > 0, s, 1.0), x) * special.gamma(np.where(s > 0, s, 1.0)),
                       special.exp1(x))
    return out[()] if out.ndim == 0 else out


def lower_incomplete_gamma(s, x):
    return special.gammainc(s, x) * special.gamma(s)


@dataclass(frozen=True)
class ChiSpec:
    nu: int

    def __post_init__(self):
        if int(self.nu) != self.nu or self.nu < 1:
            raise ConfigError(f"nu must be a positive integer, got {self.nu}")


def chi_pdf(spec: ChiSpec, x):
    x = np.asarray(x, dtype=float)
    k = spec.nu
    logp = special.xlogy(k - 1, x) - 0.5 * x * x - (0.5 * k - 1) * np.log(2.0) - special.gammaln(0.5 * k)
    out = np.where(x < 0, 0.0, np.exp(logp))
    return out[()] if out.ndim == 0 else out


def chi_cdf(spec: ChiSpec, x):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    out = special.gammainc(0.5 * spec.nu, 0.5 * x * x)
    return out[()] if np.ndim(out) == 0 else out


def chi_quantile(spec: ChiSpec, p: float) -> float:
    """x with chi_cdf(x) = p, by bracketed root finding."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must lie in (0, 1), got {p}")
    hi = max(1.0, np.sqrt(spec.nu))
    while chi_cdf(spec, hi) < p:
        hi *= 2.0
    return float(optimize.brentq(lambda x: chi_cdf(spec, x) - p, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def g_function(x, kappa: float, nu: int):
    """G(x, kappa, nu) = (Gamma((nu-1)/2, x^2/2) - Gamma((nu-1)/2, kappa^2/2)) [x < kappa]."""
    x = np.asarray(x, dtype=float)
    a = 0.5 * (nu - 1)
    inside = x < kappa
    xi = np.where(inside, x, 0.0)
    with np.errstate(invalid="ignore"):
        val = upper_incomplete_gamma(a, 0.5 * xi * xi) - upper_incomplete_gamma(a, 0.5 * kappa * kappa)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class MarginalizedChiSpec:
    nu: int
    kappa: float
    sigma_bar: float = 1.0

    def __post_init__(self):
        ChiSpec(self.nu)
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if not self.sigma_bar > 0:
            raise ConfigError("sigma_bar must be positive")

    @classmethod
    def for_threshold(cls, nu: int, tau: float, quantile: float = QUANTILE) -> "MarginalizedChiSpec":
        """sigma_bar = tau / kappa so that the density support ends at tau."""
        kappa = chi_quantile(ChiSpec(nu), quantile)
        return cls(nu, kappa, tau / kappa)

    @cached_property
    def norm(self) -> float:
        """sqrt(2) * gamma_low(nu/2, kappa^2/2)."""
        return float(np.sqrt(2.0) * lower_incomplete_gamma(0.5 * self.nu, 0.5 * self.kappa ** 2))

    @cached_property
    def rho_inf(self) -> float:
        """Base score value for x >= kappa (sigma_bar = 1)."""
        return float(-g_function(0.0, self.kappa, self.nu + 2) / self.norm)

    @property
    def support(self) -> float:
        return self.sigma_bar * self.kappa


def _base_density(spec: MarginalizedChiSpec, x):
    return g_function(x, spec.kappa, spec.nu) / spec.norm


def _base_rho(spec: MarginalizedChiSpec, x):
    x = np.asarray(x, dtype=float)
    k, nu = spec.kappa, spec.nu
    # x^2 G(x, ., nu) -> 0 at x = 0 even when G diverges (nu = 1)
    with np.errstate(invalid="ignore"):
        quad = np.where(x > 0, x * x * g_function(np.where(x > 0, x, 1.0), k, nu), 0.0)
    val = (2.0 * g_function(x, k, nu + 2) - quad - 2.0 * g_function(0.0, k, nu + 2)) / (2.0 * spec.norm)
    out = np.where(x < k, val, spec.rho_inf)
    return out[()] if out.ndim == 0 else out


def marginalized_inlier_density(spec: MarginalizedChiSpec, r):
    """p_in(r; sigma_bar) = p_in(r / sigma_bar; 1) / sigma_bar; integrates to 1 over [0, sigma_bar kappa]."""
    r = np.asarray(r, dtype=float)
    s = spec.sigma_bar
    return _base_density(spec, r / s) / s


def magsac_rho(spec: MarginalizedChiSpec, r):
    """rho(r; sigma_bar) = -int_0^r x p_in(x; sigma_bar) dx (non-positive, constant beyond the support)."""
    r = np.asarray(r, dtype=float)
    s = spec.sigma_bar
    return s * _base_rho(spec, r / s)


def total_variation(p: np.ndarray, q: np.ndarray, dx: float) -> float:
    """0.5 * int |p - q| for densities sampled on a common grid of spacing dx."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q)))) * dx
