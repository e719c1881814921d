"""Pose errors: rotation angle of R_est R_gt', angle between translation directions, e = max."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from ..core import ModelKind, ModelKindError, ModelPool, Pose, PoseError
from .poses import batched_essential_candidates


def rotation_angles(R_est: np.ndarray, R_gt: np.ndarray) -> np.ndarray:
    """Degrees; R_est may be a (..., 3, 3) stack."""
    R_est = np.asarray(R_est, dtype=float)
    rel = R_est @ np.swapaxes(np.asarray(R_gt, dtype=float), -1, -2)
    flat = rel.reshape(-1, 3, 3)
    ang = np.rad2deg(Rotation.from_matrix(flat).magnitude())
    return ang.reshape(rel.shape[:-2])


def translation_angles(t_est: np.ndarray, t_gt: np.ndarray) -> np.ndarray:
    """Degrees in [0, 180]; 0 when either direction is numerically zero."""
    t_est = np.asarray(t_est, dtype=float)
    t_gt = np.asarray(t_gt, dtype=float)
    cross = np.linalg.norm(np.cross(t_est, t_gt), axis=-1)
    dot = np.sum(t_est * t_gt, axis=-1)
    ang = np.rad2deg(np.arctan2(cross, dot))
    tiny = (np.linalg.norm(t_est, axis=-1) < 1e-15) | (np.linalg.norm(t_gt) < 1e-15)
    return np.where(tiny, 0.0, ang)


def pose_error(estimate: Pose, gt: Pose) -> PoseError:
    e_R = float(rotation_angles(estimate.R, gt.R))
    e_t = float(translation_angles(estimate.t, gt.t))
    return PoseError(e_R, e_t, max(e_R, e_t))


def essential_pose_errors(E: np.ndarray, gt: Pose) -> np.ndarray:
    """Best-candidate pose error (degrees) for each matrix of an (m, 3, 3) essential stack."""
    E = np.asarray(E, dtype=float).reshape(-1, 3, 3)
    if E.shape[0] == 0:
        return np.zeros(0)
    Rs, t = batched_essential_candidates(E)
    e_R = rotation_angles(Rs, gt.R)                  # (m, 2)
    e_t = translation_angles(t, gt.t)                # (m,)
    e_t = np.stack([e_t, 180.0 - e_t], axis=1)       # +t, -t
    e = np.maximum(e_R[:, :, None], e_t[:, None, :])
    return e.reshape(E.shape[0], -1).min(axis=1)


def pool_pose_errors(pool: ModelPool, gt: Pose) -> np.ndarray:
    if len(pool) == 0:
        return np.zeros(0)
    if pool.kind is not ModelKind.ESSENTIAL:
        raise ModelKindError("pose errors are defined for essential pools only")
    return essential_pose_errors(np.stack([m.matrix for m in pool.models]), gt)
