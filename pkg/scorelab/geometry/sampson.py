"""Sampson (first-order geometric) residuals.

Epipolar models use the one-equation form r = |x2' F x1| / sqrt(J J'),
homographies the two-equation Gauss-Newton form r^2 = g' (J J')^-1 g with
g = (v_x h3 - h1, v_y h3 - h2).
"""
from __future__ import annotations
import logging
from typing import Sequence

import numpy as np

from ..core import Correspondence, CorrespondenceSet, GeometricModel, ModelKind, ModelPool

logger = logging.getLogger(__name__)

# denominators below this fraction of ||M||^2 (resp. ||M||^4) are degenerate
_DEGENERATE = 1e-30


def _homogeneous(xy: np.ndarray) -> np.ndarray:
    return np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)


def epipolar_terms(F: np.ndarray, points: np.ndarray):
    """Algebraic error a and Sampson denominator d for a (m, 3, 3) stack."""
    x1 = _homogeneous(points[:, :2])
    x2 = _homogeneous(points[:, 2:])
    l1 = np.einsum("mij,nj->mni", F, x1)  # F x1
    l2 = np.einsum("mji,nj->mni", F, x2)  # F' x2
    a = np.einsum("ni,mni->mn", x2, l1)
    d = l1[..., 0] ** 2 + l1[..., 1] ** 2 + l2[..., 0] ** 2 + l2[..., 1] ** 2
    return a, d, l1, l2


def _homography_terms(H: np.ndarray, points: np.ndarray):
    """Residual vector g and the 2x2 Gram matrix (A, B; B, C) of its Jacobian."""
    x1 = _homogeneous(points[:, :2])
    vx, vy = points[:, 2], points[:, 3]
    h = np.einsum("mij,nj->mni", H, x1)
    g1 = vx * h[..., 2] - h[..., 0]
    g2 = vy * h[..., 2] - h[..., 1]
    H = H[:, None]
    # rows of dg/d(u_x, u_y, v_x, v_y)
    j1x, j1y = vx * H[..., 2, 0] - H[..., 0, 0], vx * H[..., 2, 1] - H[..., 0, 1]
    j2x, j2y = vy * H[..., 2, 0] - H[..., 1, 0], vy * H[..., 2, 1] - H[..., 1, 1]
    h3sq = h[..., 2] ** 2
    A = j1x ** 2 + j1y ** 2 + h3sq
    B = j1x * j2x + j1y * j2y
    C = j2x ** 2 + j2y ** 2 + h3sq
    return g1, g2, A, B, C


def residual_matrix(matrices: np.ndarray, kind: ModelKind, points: np.ndarray) -> np.ndarray:
    """Sampson residuals of m pixel-space matrices against n points, shape (m, n).

    Degenerate denominators yield +inf.
    """
    matrices = np.asarray(matrices, dtype=float).reshape(-1, 3, 3)
    points = np.asarray(points, dtype=float).reshape(-1, 4)
    scale = np.sum(matrices ** 2, axis=(1, 2))[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        if ModelKind(kind) is ModelKind.HOMOGRAPHY:
            g1, g2, A, B, C = _homography_terms(matrices, points)
            det = A * C - B * B
            r2 = (C * g1 ** 2 - 2.0 * B * g1 * g2 + A * g2 ** 2) / det
            bad = ~(det > _DEGENERATE * scale ** 2)
        else:
            a, d, _, _ = epipolar_terms(matrices, points)
            r2 = a ** 2 / d
            bad = ~(d > _DEGENERATE * scale)
    r = np.sqrt(np.maximum(r2, 0.0))
    r[bad] = np.inf
    if np.any(bad):
        logger.warning("%d degenerate Sampson denominators flagged as +inf", int(bad.sum()))
    return r


def sampson_residual(model: GeometricModel, c: Correspondence) -> float:
    return float(residual_matrix(model.pixel_matrix(), model.kind, c.x[None])[0, 0])


def residual_vector(model: GeometricModel, cs: CorrespondenceSet) -> np.ndarray:
    if len(cs) == 0:
        return np.zeros(0)
    return residual_matrix(model.pixel_matrix(), model.kind, cs.points)[0]


def pool_residuals(models: ModelPool | Sequence[GeometricModel], cs: CorrespondenceSet) -> np.ndarray:
    """Residuals of every pool model against every correspondence, shape (m, n)."""
    if not isinstance(models, ModelPool):
        models = ModelPool(tuple(models), ("minimal_sample",) * len(models))
    if len(models) == 0:
        return np.zeros((0, len(cs)))
    return residual_matrix(models.stacked(), models.kind, cs.points)


def signed_epipolar_residual(F: np.ndarray, points: np.ndarray) -> np.ndarray:
    """a / sqrt(d): smooth signed Sampson residual, |.| equals the residual."""
    a, d, _, _ = epipolar_terms(F[None], points)
    return (a / np.sqrt(d))[0]


def whitened_homography_residual(H: np.ndarray, points: np.ndarray) -> np.ndarray:
    """2-vector per point e = L^-1 g with L L' = J J', so ||e||^2 = r^2. Shape (2n,)."""
    g1, g2, A, B, C = _homography_terms(H[None], points)
    l11 = np.sqrt(A)
    l21 = B / l11
    l22 = np.sqrt(np.maximum(C - l21 ** 2, 0.0))
    e1 = g1 / l11
    e2 = (g2 - l21 * e1) / l22
    return np.stack([e1[0], e2[0]], axis=1).reshape(-1)
