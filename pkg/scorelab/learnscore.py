"""Monotone discretized inlier density fitted by maximum likelihood on a residual histogram.

The density over K bins of [0, tau_max) is p_k = exp(w_k) / (Z delta) with
w_k = sum_{l > k} softplus(eta_l), so it is non-increasing for any eta.
Residuals follow the mixture gamma p_in(r) + (1 - gamma) / r_max.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from scipy import special

from .core import ConfigError, DiscretizationMismatchError
from .scoring.functions import ScoreTable, bin_centers
from .scoring.histogram import ResidualHistogram

logger = logging.getLogger(__name__)

R_MAX = 100.0
FIT_ITERS = 3000
FIT_RTOL = 1e-10
FIT_PATIENCE = 10
SPAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MonotoneDensityParams:
    eta: np.ndarray
    gamma: float
    tau_max: float
    r_max: float = R_MAX
    trace: tuple = ()   # objective after each accepted fitting step

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if eta.size < 2:
            raise ConfigError("K must be at least 2")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not (self.tau_max > 0 and self.r_max > 0):
            raise ConfigError("tau_max and r_max must be positive")
        object.__setattr__(self, "eta", eta)

    @property
    def K(self) -> int:
        return self.eta.size

    @property
    def delta(self) -> float:
        return self.tau_max / self.K

    def to_dict(self) -> dict:
        return {
            "eta": self.eta.tolist(),
            "gamma": self.gamma,
            "tau_max": self.tau_max,
            "r_max": self.r_max,
            "trace": list(self.trace),
        }


def _inlier_log_weights(eta: np.ndarray) -> np.ndarray:
    inc = np.logaddexp(0.0, eta)
    return np.cumsum(inc[::-1])[::-1] - inc


def log_density(p: MonotoneDensityParams) -> np.ndarray:
    w = _inlier_log_weights(p.eta)
    return w - special.logsumexp(w) - math.log(p.delta)


def density_from_params(p: MonotoneDensityParams) -> np.ndarray:
    """Non-increasing density values per bin; sum(density) * delta = 1."""
    return np.exp(log_density(p))


def _log_density_t(eta: torch.Tensor, delta: float) -> torch.Tensor:
    inc = torch.nn.functional.softplus(eta)
    w = torch.flip(torch.cumsum(torch.flip(inc, [0]), 0), [0]) - inc
    return w - torch.logsumexp(w, 0) - math.log(delta)


def _objective_t(eta: torch.Tensor, weights: torch.Tensor, gamma: float, r_max: float, delta: float) -> torch.Tensor:
    out_term = math.log((1.0 - gamma) / r_max)
    mix = torch.logaddexp(math.log(gamma) + _log_density_t(eta, delta), torch.tensor(out_term, dtype=eta.dtype))
    return torch.sum(weights * mix)


def initial_eta(K: int) -> np.ndarray:
    """eta = 0: every increment is log 2."""
    return np.zeros(K)


def _lbfgs(eta: torch.Tensor) -> torch.optim.LBFGS:
    return torch.optim.LBFGS([eta], lr=1.0, max_iter=1, history_size=50, tolerance_grad=1e-12,
                             tolerance_change=1e-16, line_search_fn="strong_wolfe")


def fit_inlier_density(hist: ResidualHistogram, gamma: float, K: Optional[int] = None,
                       iters: int = FIT_ITERS, r_max: float = R_MAX,
                       eta0: Optional[np.ndarray] = None) -> MonotoneDensityParams:
    """Maximize sum_k H_k log(gamma p_k + (1 - gamma) / r_max) / sum_k H_k with L-BFGS.

    Iterates until the gain stays below FIT_RTOL (relative) for FIT_PATIENCE
    steps. A step that lowers the objective is reverted and the curvature
    history dropped; two in a row end the fit. The trace holds the
    per-residual objective after each accepted step.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if K is not None and K != hist.K:
        raise DiscretizationMismatchError(f"histogram has {hist.K} bins, asked for {K}")
    total = int(hist.counts.sum())
    if total == 0:
        raise ConfigError("cannot fit an empty histogram")
    K = hist.K
    delta = hist.tau_max / K
    counts = torch.from_numpy(hist.counts.astype(np.float64))
    eta = torch.tensor(initial_eta(K) if eta0 is None else np.asarray(eta0, dtype=float), dtype=torch.float64,
                       requires_grad=True)
    opt = _lbfgs(eta)

    def closure():
        opt.zero_grad()
        # raw counts keep gradients well above the optimizer's tolerances
        loss = -_objective_t(eta, counts, gamma, r_max, delta)
        loss.backward()
        return loss

    def objective() -> float:
        with torch.no_grad():
            return float(_objective_t(eta, counts, gamma, r_max, delta)) / total

    best = objective()
    trace = [best]
    stalled = 0
    rejected = False
    for it in range(iters):
        prev = eta.detach().clone()
        opt.step(closure)
        value = objective()
        if not math.isfinite(value) or value < best:
            with torch.no_grad():
                eta.copy_(prev)
            if rejected:
                logger.debug("fit stopped at iteration %d: objective would drop", it)
                break
            rejected = True
            opt = _lbfgs(eta)
            continue
        rejected = False
        gain = value - best
        best = value
        trace.append(value)
        stalled = stalled + 1 if gain <= FIT_RTOL * max(1.0, abs(best)) else 0
        if stalled >= FIT_PATIENCE:
            break
    logger.info("learned density fit: K=%d gamma=%g objective=%.9g after %d steps", K, gamma, best, len(trace) - 1)
    return MonotoneDensityParams(eta.detach().numpy().copy(), gamma, hist.tau_max, r_max, tuple(trace))


def binned_log_likelihood(p: MonotoneDensityParams, hist: ResidualHistogram) -> float:
    """sum_k H_k log(gamma p_k + (1 - gamma) / r_max), overflow counted as outliers."""
    if hist.K != p.K or not math.isclose(hist.tau_max, p.tau_max, rel_tol=1e-12):
        raise DiscretizationMismatchError("histogram and parameters do not share tau_max and K")
    out_term = math.log((1.0 - p.gamma) / p.r_max)
    mix = np.logaddexp(math.log(p.gamma) + log_density(p), out_term)
    return float(hist.counts @ mix + hist.overflow * out_term)


def learned_score_table(p: MonotoneDensityParams, tau_max: Optional[float] = None,
                        K: Optional[int] = None) -> ScoreTable:
    """log(gamma p_k + (1 - gamma) / r_max) rescaled to [0, 1]; flat tables are marked uninformative."""
    if (K is not None and K != p.K) or (tau_max is not None and not math.isclose(tau_max, p.tau_max, rel_tol=1e-12)):
        raise DiscretizationMismatchError("table discretization must match the fitted density")
    w = np.logaddexp(math.log(p.gamma) + log_density(p), math.log((1.0 - p.gamma) / p.r_max))
    span = float(w.max() - w.min())
    if span <= SPAN_TOL:
        logger.warning("learned score table is flat; marked uninformative")
        return ScoreTable(p.tau_max, np.zeros(p.K), informative=False)
    return ScoreTable(p.tau_max, (w - w.min()) / span)


def equivalent_threshold(p: MonotoneDensityParams) -> Optional[float]:
    """Residual where gamma p_in = (1 - gamma) / r_max, interpolated between bin centers in log space."""
    lhs = math.log(p.gamma) + log_density(p)
    rhs = math.log((1.0 - p.gamma) / p.r_max)
    below = np.nonzero(lhs < rhs)[0]
    if below.size == 0 or below[0] == 0:
        return None
    k = int(below[0])
    c = bin_centers(p.tau_max, p.K)
    frac = (lhs[k - 1] - rhs) / (lhs[k - 1] - lhs[k])
    return float(c[k - 1] + frac * (c[k] - c[k - 1]))


def gau_equivalent_threshold(gamma: float, sigma: float = 1.0, r_max: float = R_MAX) -> Optional[float]:
    """tau with gamma * halfnormal(tau; sigma) = (1 - gamma) / r_max."""
    arg = gamma * math.sqrt(2.0 / math.pi) * r_max / ((1.0 - gamma) * sigma)
    if arg <= 1.0:
        return None
    return sigma * math.sqrt(2.0 * math.log(arg))
