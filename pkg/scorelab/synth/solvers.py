"""Normalized DLT solvers: 4-point homography and 8-point fundamental / essential.

Both work on batches of samples, shape (m, k, 2) per image, and report a
validity mask instead of raising on degenerate draws.
"""
from __future__ import annotations
import logging
from itertools import combinations
from typing import Optional

import numpy as np

from ..core import ConfigError, CorrespondenceSet, GeometricModel, ModelKind

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
DEGENERATE_TOL = 1e-8


def normalize_points(pts: np.ndarray):
    """Similarity T per sample with zero centroid and mean distance sqrt(2).

    Returns (T (m, 3, 3), normalized points (m, k, 2), ok (m,)).
    """
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=1, keepdims=True)
    d = np.linalg.norm(pts - c, axis=2).mean(axis=1)
    ok = d > 1e-12 * (1.0 + np.abs(c).max(axis=(1, 2)))
    s = np.sqrt(2.0) / np.where(ok, d, 1.0)
    T = np.zeros((pts.shape[0], 3, 3))
    T[:, 0, 0] = T[:, 1, 1] = s
    T[:, :2, 2] = -s[:, None] * c[:, 0, :]
    T[:, 2, 2] = 1.0
    return T, (pts - c) * s[:, None, None], ok


def _homogeneous(p: np.ndarray) -> np.ndarray:
    return np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)


def _general_position(p: np.ndarray) -> np.ndarray:
    """No duplicate points and no three collinear points, per sample of normalized (m, 4, 2) points."""
    ok = np.ones(p.shape[0], dtype=bool)
    for i, j in combinations(range(p.shape[1]), 2):
        ok &= np.linalg.norm(p[:, i] - p[:, j], axis=1) > DEGENERATE_TOL
    for i, j, k in combinations(range(p.shape[1]), 3):
        a, b = p[:, j] - p[:, i], p[:, k] - p[:, i]
        ok &= np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) > DEGENERATE_TOL
    return ok


def homography_batch(src: np.ndarray, dst: np.ndarray):
    """H (m, 3, 3), unit Frobenius norm, mapping src[i] to dst[i]; plus validity mask."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    m, k = src.shape[:2]
    T1, a, ok1 = normalize_points(src)
    T2, b, ok2 = normalize_points(dst)
    ok = ok1 & ok2 & _general_position(a) & _general_position(b)

    x, y = a[..., 0], a[..., 1]
    u, v = b[..., 0], b[..., 1]
    zero, one = np.zeros_like(x), np.ones_like(x)
    r1 = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=-1)
    r2 = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=-1)
    A = np.stack([r1, r2], axis=2).reshape(m, 2 * k, 9)
    _, s, Vt = np.linalg.svd(A)
    ok &= s[:, 7] > RANK_TOL * s[:, 0]
    Hn = Vt[:, -1].reshape(m, 3, 3)
    H = np.linalg.solve(T2, Hn @ T1)
    H /= np.linalg.norm(H, axis=(1, 2), keepdims=True)
    ok &= np.all(np.isfinite(H), axis=(1, 2))
    return H, ok


def _as_points(samples) -> np.ndarray:
    if isinstance(samples, CorrespondenceSet):
        return samples.points
    return np.asarray([getattr(c, "x", c) for c in samples], dtype=float).reshape(-1, 4)


def solver_homography_4pt(samples) -> Optional[GeometricModel]:
    pts = _as_points(samples)
    if pts.shape[0] != 4:
        raise ConfigError(f"the 4-point solver needs 4 correspondences, got {pts.shape[0]}")
    H, ok = homography_batch(pts[None, :, :2], pts[None, :, 2:])
    if not ok[0]:
        logger.debug("degenerate 4-point sample")
        return None
    return GeometricModel(ModelKind.HOMOGRAPHY, H[0])


def _project_essential_batch(E: np.ndarray) -> np.ndarray:
    U, s, Vt = np.linalg.svd(E)
    mean = 0.5 * (s[:, 0] + s[:, 1])
    S = np.zeros_like(s)
    S[:, 0] = S[:, 1] = mean
    return (U * S[:, None, :]) @ Vt


def eightpoint_batch(x1: np.ndarray, x2: np.ndarray, want_essential: bool = False, focal: float = 1.0):
    """Rank-2 F (or essential E when want_essential) per sample of k >= 8 pixel correspondences.

    E acts on focal-normalized coordinates. Returns matrices (m, 3, 3), unit
    Frobenius norm, and a validity mask.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if want_essential:
        x1, x2 = x1 / focal, x2 / focal
    m, k = x1.shape[:2]
    T1, a, ok1 = normalize_points(x1)
    T2, b, ok2 = normalize_points(x2)
    ok = ok1 & ok2
    A = np.einsum("mki,mkj->mkij", _homogeneous(b), _homogeneous(a)).reshape(m, k, 9)
    _, s, Vt = np.linalg.svd(A)
    ok &= s[:, 7] > RANK_TOL * s[:, 0]
    Fn = Vt[:, -1].reshape(m, 3, 3)
    U, fs, FVt = np.linalg.svd(Fn)
    fs[:, 2] = 0.0
    Fn = (U * fs[:, None, :]) @ FVt
    F = np.swapaxes(T2, 1, 2) @ Fn @ T1
    if want_essential:
        F = _project_essential_batch(F)
    norm = np.linalg.norm(F, axis=(1, 2), keepdims=True)
    ok &= norm[:, 0, 0] > 0
    F = F / np.where(norm > 0, norm, 1.0)
    ok &= np.all(np.isfinite(F), axis=(1, 2))
    return F, ok


def solver_eightpoint(samples, want_essential: bool = False, focal: float = 1.0) -> Optional[GeometricModel]:
    pts = _as_points(samples)
    if pts.shape[0] < 8:
        raise ConfigError(f"the 8-point solver needs at least 8 correspondences, got {pts.shape[0]}")
    F, ok = eightpoint_batch(pts[None, :, :2], pts[None, :, 2:], want_essential, focal)
    if not ok[0]:
        logger.debug("rank-deficient 8-point design matrix")
        return None
    if want_essential:
        return GeometricModel(ModelKind.ESSENTIAL, F[0], focal)
    return GeometricModel(ModelKind.FUNDAMENTAL, F[0])
