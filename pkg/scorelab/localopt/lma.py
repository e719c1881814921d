"""IRLS with Levenberg-Marquardt damping, the GaU EM step and the marginal log-likelihood.

Each outer iteration freezes the weights w_i = irls_weight(r_i) at the current
model and tries a damped Gauss-Newton step on sum_i w_i r_i^2:

    (G + lambda1 diag(G) + lambda2 I) delta = -J' W r,   G = J' W J

A step is accepted iff the frozen objective strictly decreases; damping is
divided by accept_factor on acceptance and multiplied by it otherwise.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import linalg

from ..core import ConfigError, CorrespondenceSet, GeometricModel, ModelKind, ModelKindError, Pose
from ..geometry.poses import compose_essential
from ..geometry.sampson import residual_vector
from ..scoring.functions import Family, ScoreSpec, inlier_posterior, irls_weight, rho, smax
from . import jacobians as jac

logger = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12
MAX_DAMPING = 1e16
H33_TOL = 1e-8


@dataclass(frozen=True)
class LmaConfig:
    max_iter: int = 25
    lambda1: float = 1e-3
    lambda2: float = 1e-8
    accept_factor: float = 10.0
    tol_step: float = 1e-10

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError("max_iter must be a positive integer")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("damping must be non-negative")
        if not self.accept_factor > 1:
            raise ConfigError("accept_factor must exceed 1")


@dataclass
class TraceStep:
    iteration: int
    objective_before: float   # frozen-weight sum w r^2 at the current model
    objective_after: float    # same weights, at the proposed model
    robust_objective: float   # -sum rho(r) after the iteration
    step_norm: float
    accepted: bool

    @property
    def objective(self) -> float:
        return self.objective_after if self.accepted else self.objective_before


@dataclass
class OptTrace:
    iterations: list[TraceStep] = field(default_factory=list)
    status: str = "max_iter"   # converged | max_iter | zero_weights | stalled | nonfinite_jacobian | degenerate_h33
    initial_robust_objective: float = float("nan")

    def accepted_objectives(self) -> list[tuple[float, float]]:
        return [(s.objective_before, s.objective_after) for s in self.iterations if s.accepted]

    def robust_objectives(self) -> list[float]:
        return [s.robust_objective for s in self.iterations if s.accepted]


class _EssentialProblem:
    """x = (quaternion xyzw, translation); residual = signed Sampson."""

    def __init__(self, points: np.ndarray, focal: float):
        self.points = points
        self.focal = focal

    @staticmethod
    def params(p: Pose) -> np.ndarray:
        return np.concatenate([p.rotation, p.translation])

    def residuals(self, x):
        return jac.essential_residuals(x, self.points, self.focal)

    def jacobian(self, x):
        return jac.essential_jacobian(x, self.points, self.focal)

    def sampson(self, x):
        return np.abs(self.residuals(x))

    def expand(self, w):
        return w

    @staticmethod
    def retract(x):
        q, t = x[:4], x[4:]
        return np.concatenate([q / np.linalg.norm(q), t / np.linalg.norm(t)])

    def to_model(self, x) -> Pose:
        return Pose(x[:4], x[4:])


class _HomographyProblem:
    """x = H.flat[:8] with H_33 = 1; residual = whitened 2-vector per point."""

    def __init__(self, points: np.ndarray):
        self.points = points

    @staticmethod
    def params(m: GeometricModel) -> np.ndarray:
        return (m.matrix / m.matrix[2, 2]).reshape(-1)[:8]

    def residuals(self, x):
        return jac.homography_residuals(x, self.points)

    def jacobian(self, x):
        return jac.homography_jacobian(x, self.points)

    def sampson(self, x):
        e = self.residuals(x).reshape(-1, 2)
        return np.sqrt(np.sum(e * e, axis=1))

    def expand(self, w):
        return np.repeat(w, 2)

    @staticmethod
    def retract(x):
        return x

    def to_model(self, x) -> GeometricModel:
        H = jac.homography_from_params(x)
        return GeometricModel(ModelKind.HOMOGRAPHY, H / np.linalg.norm(H))


def _problem(init: Union[Pose, GeometricModel], cs: CorrespondenceSet, focal: float):
    if isinstance(init, Pose):
        return _EssentialProblem(cs.points, focal), _EssentialProblem.params(init)
    if init.kind is ModelKind.HOMOGRAPHY:
        return _HomographyProblem(cs.points), None
    raise ModelKindError(f"local optimization takes a Pose or a homography, got {init.kind.value}")


def _damped_solve(G: np.ndarray, g: np.ndarray, lambda1: float, lambda2: float) -> np.ndarray:
    n = G.shape[0]
    lam2 = max(lambda2, 0.0)
    for _ in range(12):
        A = G + lambda1 * np.diag(np.diag(G)) + lam2 * np.eye(n)
        try:
            return -linalg.cho_solve(linalg.cho_factor(A), g)
        except linalg.LinAlgError:
            lam2 = max(10.0 * lam2, 1e-12)
            logger.debug("Cholesky failed, lambda2 raised to %g", lam2)
    raise linalg.LinAlgError("damped normal equations stayed indefinite")


def _robust(spec: ScoreSpec, r: np.ndarray) -> float:
    return -float(np.sum(rho(spec, r)))


def irls_lma(spec: ScoreSpec, init: Union[Pose, GeometricModel], cs: CorrespondenceSet,
             cfg: LmaConfig = LmaConfig(), focal: float = 1.0):
    """Locally optimize init under spec; returns (model, OptTrace). Essential inputs are Poses."""
    trace = OptTrace()
    problem, x = _problem(init, cs, focal)
    if x is None:
        H = init.matrix
        if abs(H[2, 2]) < H33_TOL * np.linalg.norm(H):
            logger.warning("homography with vanishing H33 is not optimized")
            trace.status = "degenerate_h33"
            return init, trace
        x = _HomographyProblem.params(init)
    if len(cs) == 0:
        trace.status = "zero_weights"
        return init, trace

    lam1, lam2 = cfg.lambda1, cfg.lambda2
    r = problem.sampson(x)
    w = irls_weight(spec, r)
    trace.initial_robust_objective = _robust(spec, r)
    if np.all(w < ZERO_WEIGHT):
        logger.warning("all IRLS weights vanish; model left unchanged")
        trace.status = "zero_weights"
        return init, trace

    for it in range(cfg.max_iter):
        W = problem.expand(w)
        res = problem.residuals(x)
        J = problem.jacobian(x)
        if not np.all(np.isfinite(J)):
            logger.warning("non-finite Jacobian at iteration %d", it)
            trace.status = "nonfinite_jacobian"
            break
        before = float(np.sum(W * res * res))
        G = J.T @ (W[:, None] * J)
        g = J.T @ (W * res)
        delta = _damped_solve(G, g, lam1, lam2)
        step = float(np.linalg.norm(delta))
        x_new = problem.retract(x + delta)
        res_new = problem.residuals(x_new)
        after = float(np.sum(W * res_new * res_new))
        accepted = bool(np.isfinite(after) and after < before)
        if accepted:
            x = x_new
            r = problem.sampson(x)
            lam1 /= cfg.accept_factor
            lam2 /= cfg.accept_factor
        else:
            lam1 = max(lam1, 1e-12) * cfg.accept_factor
            lam2 = max(lam2, 1e-12) * cfg.accept_factor
        trace.iterations.append(TraceStep(it, before, after, _robust(spec, r), step, accepted))
        logger.debug("lma it=%d before=%.9g after=%.9g step=%.3g accepted=%s", it, before, after, step, accepted)
        if step < cfg.tol_step:
            trace.status = "converged"
            break
        if lam1 > MAX_DAMPING:
            trace.status = "stalled"
            break
        if accepted:
            w = irls_weight(spec, r)
            if np.all(w < ZERO_WEIGHT):
                logger.warning("all IRLS weights vanished at iteration %d", it)
                trace.status = "zero_weights"
                break
    return problem.to_model(x), trace


class EmStep(NamedTuple):
    weights: np.ndarray
    model: Union[Pose, GeometricModel]
    flagged: bool
    step_norm: float


def em_irls_step(spec: ScoreSpec, model: Union[Pose, GeometricModel], cs: CorrespondenceSet,
                 focal: float = 1.0, cfg: LmaConfig = LmaConfig()) -> EmStep:
    """E-step posteriors q_i, then one damped Gauss-Newton pass on sum q_i r_i^2."""
    if spec.family is not Family.GAU_MARGINAL:
        raise ConfigError("the EM step is defined for gau_marginal only")
    problem, x = _problem(model, cs, focal)
    if x is None:
        x = _HomographyProblem.params(model)
    r = problem.sampson(x)
    q = inlier_posterior(spec, r)
    if q.size == 0 or np.all(q < ZERO_WEIGHT):
        logger.warning("EM posteriors vanish; no update")
        return EmStep(q, model, True, 0.0)
    W = problem.expand(q)
    res = problem.residuals(x)
    J = problem.jacobian(x)
    if not np.all(np.isfinite(J)):
        return EmStep(q, model, True, 0.0)
    before = float(np.sum(W * res * res))
    G = J.T @ (W[:, None] * J)
    g = J.T @ (W * res)
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    for _ in range(cfg.max_iter):
        delta = _damped_solve(G, g, lam1, lam2)
        x_new = problem.retract(x + delta)
        res_new = problem.residuals(x_new)
        if float(np.sum(W * res_new * res_new)) <= before:
            return EmStep(q, problem.to_model(x_new), False, float(np.linalg.norm(delta)))
        lam1 *= cfg.accept_factor
        lam2 = max(lam2, 1e-12) * cfg.accept_factor
    return EmStep(q, model, False, 0.0)


def marginal_log_likelihood(spec: ScoreSpec, model: Union[Pose, GeometricModel], cs: CorrespondenceSet,
                            focal: float = 1.0) -> float:
    """sum_i smax((tau^2 - r_i^2) / 2 sigma^2, 0)."""
    if spec.family is not Family.GAU_MARGINAL:
        raise ConfigError("the marginal log-likelihood is defined for gau_marginal only")
    if len(cs) == 0:
        return 0.0
    m = compose_essential(model, focal) if isinstance(model, Pose) else model
    r = residual_vector(m, cs)
    return float(np.sum(smax((spec.tau ** 2 - r * r) / (2.0 * spec.sigma ** 2), 0.0)))
