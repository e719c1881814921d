"""Fit the GaU inlier posterior to the MAGSAC++ weight function.

Both curves are normalized by their value at r = 0 and compared on a
512-point grid over [0, kappa] with sigma_bar = 1. The fit runs a few rounds
of coordinate descent and then a joint least-squares refinement.
"""
from __future__ import annotations
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, special

from ..core import ConfigError
from ..distributions import QUANTILE, ChiSpec, MarginalizedChiSpec, chi_quantile, marginalized_inlier_density
from ..scoring.functions import Family, ScoreSpec, rho

logger = logging.getLogger(__name__)

GRID_POINTS = 512
SUP_POINTS = 1000
_TAU_BOUNDS = (1e-3, 10.0)
_SIGMA_BOUNDS = (1e-2, 10.0)


@dataclass(frozen=True)
class MagsacFit:
    nu: int
    kappa: float
    tau: float
    sigma: float
    sup_err: float     # sup |normalized MAGSAC score - GaU score| over [0, 2 kappa]
    rms_weight: float  # rms residual of the weight fit

    def to_dict(self) -> dict:
        return asdict(self)


def gau_weight(x: np.ndarray, tau: float, sigma: float) -> np.ndarray:
    """sigm((tau^2 - x^2) / 2 sigma^2) / sigm(tau^2 / 2 sigma^2)."""
    s2 = 2.0 * sigma * sigma
    return special.expit((tau * tau - x * x) / s2) / special.expit(tau * tau / s2)


def fit_magsac_to_gau(nu: int, grid: int = GRID_POINTS, rounds: int = 10) -> MagsacFit:
    if int(nu) != nu or nu < 2:
        raise ConfigError(f"the weight at r = 0 is finite only for nu >= 2, got {nu}")
    kappa = chi_quantile(ChiSpec(nu), QUANTILE)
    spec = MarginalizedChiSpec(nu, kappa, 1.0)
    x = np.linspace(0.0, kappa, grid)
    target = marginalized_inlier_density(spec, x) / marginalized_inlier_density(spec, 0.0)

    def residual(p):
        return gau_weight(x, p[0], p[1]) - target

    def sse(tau, sigma):
        r = residual((tau, sigma))
        return float(r @ r)

    tau, sigma = 0.5 * kappa, 1.0
    for _ in range(rounds):
        tau = optimize.minimize_scalar(lambda t: sse(t, sigma), bounds=_TAU_BOUNDS, method="bounded",
                                       options={"xatol": 1e-10}).x
        sigma = optimize.minimize_scalar(lambda s: sse(tau, s), bounds=_SIGMA_BOUNDS, method="bounded",
                                         options={"xatol": 1e-10}).x
    ls = optimize.least_squares(residual, x0=[tau, sigma],
                                bounds=([_TAU_BOUNDS[0], _SIGMA_BOUNDS[0]], [_TAU_BOUNDS[1], _SIGMA_BOUNDS[1]]),
                                xtol=1e-14, ftol=1e-14, gtol=1e-14)
    tau, sigma = (float(v) for v in ls.x)
    rms = float(np.sqrt(np.mean(ls.fun ** 2)))

    r = np.linspace(0.0, 2.0 * kappa, SUP_POINTS)
    magsac = rho(ScoreSpec(Family.MAGSAC, kappa, nu=nu), r)
    gau = rho(ScoreSpec(Family.GAU_MARGINAL, tau, sigma), r)
    sup_err = float(np.max(np.abs(magsac - gau)))
    logger.info("nu=%d kappa=%.6g fitted tau=%.6g sigma=%.6g sup_err=%.3g", nu, kappa, tau, sigma, sup_err)
    return MagsacFit(int(nu), kappa, tau, sigma, sup_err, rms)
