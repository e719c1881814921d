"""Residuals and Jacobians for the two local-optimization parameterizations.

Essential: x = (q_x, q_y, q_z, q_w, t_x, t_y, t_z), E = [t]x R(q) with the
homogeneous quaternion form of R (exact for unit q), signed Sampson residual
a / sqrt(d) in pixel space. Homography: x = the first 8 entries of H with
H_33 = 1, whitened two-equation Sampson residuals, central differences.
"""
from __future__ import annotations

import numpy as np

from ..geometry.poses import skew
from ..geometry.sampson import epipolar_terms, signed_epipolar_residual, whitened_homography_residual

_P = np.diag([1.0, 1.0, 0.0])
_BASIS = np.eye(3)


def rotation_homogeneous(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


def rotation_derivatives(q: np.ndarray) -> np.ndarray:
    """dR/dq_m for m = x, y, z, w, shape (4, 3, 3)."""
    x, y, z, w = q
    return 2.0 * np.array([
        [[x, y, z], [y, -x, -w], [z, w, -x]],
        [[-y, x, w], [x, y, z], [-w, z, -y]],
        [[-z, -w, x], [w, -z, y], [x, y, z]],
        [[w, -z, y], [z, w, -x], [-y, x, w]],
    ])


def _pixel_scale(focal: float) -> np.ndarray:
    return np.array([1.0 / focal, 1.0 / focal, 1.0])


def essential_from_params(x: np.ndarray) -> np.ndarray:
    return skew(x[4:]) @ rotation_homogeneous(x[:4])


def essential_residuals(x: np.ndarray, points: np.ndarray, focal: float) -> np.ndarray:
    D = _pixel_scale(focal)
    F = D[:, None] * essential_from_params(x) * D[None, :]
    return signed_epipolar_residual(F, points)


def essential_jacobian(x: np.ndarray, points: np.ndarray, focal: float) -> np.ndarray:
    """d(a / sqrt(d)) / dx, shape (n, 7)."""
    q, t = x[:4], x[4:]
    R = rotation_homogeneous(q)
    D = _pixel_scale(focal)
    F = D[:, None] * (skew(t) @ R) * D[None, :]
    a, d, l1, l2 = epipolar_terms(F[None], points)
    a, d, l1, l2 = a[0], d[0], l1[0], l2[0]
    x1 = np.column_stack([points[:, :2], np.ones(len(points))])
    x2 = np.column_stack([points[:, 2:], np.ones(len(points))])
    sd = np.sqrt(d)
    dF = (x2[:, :, None] * x1[:, None, :]) / sd[:, None, None]
    corr = (a / (2.0 * d * sd))[:, None, None]
    dF -= corr * 2.0 * ((l1 @ _P)[:, :, None] * x1[:, None, :] + x2[:, :, None] * (l2 @ _P)[:, None, :])
    dE = D[None, :, None] * dF * D[None, None, :]

    dq = skew(t)[None] @ rotation_derivatives(q)             # (4, 3, 3)
    dt = skew(_BASIS) @ R[None]                              # (3, 3, 3)
    dparams = np.concatenate([dq, dt])                       # (7, 3, 3)
    return np.einsum("nij,pij->np", dE, dparams)


def homography_from_params(x: np.ndarray) -> np.ndarray:
    return np.append(x, 1.0).reshape(3, 3)


def homography_residuals(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    return whitened_homography_residual(homography_from_params(x), points)


def homography_jacobian(x: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Central differences, shape (2n, 8)."""
    J = np.empty((2 * len(points), x.size))
    for k in range(x.size):
        h = 1e-6 * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (homography_residuals(xp, points) - homography_residuals(xm, points)) / (2.0 * h)
    return J
