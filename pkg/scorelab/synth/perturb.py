"""Controlled deviations from a ground-truth model.

Rotation modes form (Q R, t), RandomTransRot forms (R, Q t) with the axis
orthogonal to t, so the resulting pose error is exactly theta.
"""
from __future__ import annotations
from enum import Enum

import numpy as np

from ..core import ConfigError, GeometricModel, ModelKind, ModelKindError, Pose
from ..geometry.poses import rotation_about
from .scenes import make_rng, random_unit


class PerturbMode(str, Enum):
    PITCH = "pitch"
    YAW = "yaw"
    ROLL = "roll"
    RANDOM_ROT = "random_rot"
    RANDOM_TRANS_ROT = "random_trans_rot"


_AXES = {
    PerturbMode.PITCH: np.array([1.0, 0.0, 0.0]),
    PerturbMode.YAW: np.array([0.0, 1.0, 0.0]),
    PerturbMode.ROLL: np.array([0.0, 0.0, 1.0]),
}


def _orthogonal_unit(rng, t: np.ndarray) -> np.ndarray:
    while True:
        a = random_unit(rng)
        a = a - (a @ t) * t
        n = np.linalg.norm(a)
        if n > 1e-8:
            return a / n


def perturbation_rotation(mode: PerturbMode, theta: float, rng, t: np.ndarray | None = None) -> np.ndarray:
    mode = PerturbMode(mode)
    if mode in _AXES:
        axis = _AXES[mode]
    elif mode is PerturbMode.RANDOM_ROT:
        axis = random_unit(rng)
    else:
        axis = _orthogonal_unit(rng, t)
    return rotation_about(axis, theta)


def perturb_model(gt: Pose, mode: PerturbMode, theta: float, seed) -> Pose:
    if not theta >= 0:
        raise ConfigError(f"theta must be non-negative, got {theta}")
    mode = PerturbMode(mode)
    if theta == 0:
        return Pose(gt.rotation.copy(), gt.translation.copy())
    Q = perturbation_rotation(mode, theta, make_rng(seed), gt.t)
    if mode is PerturbMode.RANDOM_TRANS_ROT:
        return Pose(gt.rotation, Q @ gt.t)
    return Pose.from_matrix(Q @ gt.R, gt.t)


def perturb_homography(model: GeometricModel, focal: float, mode: PerturbMode, theta: float, seed) -> GeometricModel:
    """Rotate the second camera: H' = K Q K^-1 H."""
    if model.kind is not ModelKind.HOMOGRAPHY:
        raise ModelKindError("perturb_homography needs a homography")
    mode = PerturbMode(mode)
    if mode is PerturbMode.RANDOM_TRANS_ROT:
        raise ConfigError("homographies carry no translation direction to rotate")
    if not theta >= 0:
        raise ConfigError(f"theta must be non-negative, got {theta}")
    Q = perturbation_rotation(mode, theta, make_rng(seed))
    K = np.diag([focal, focal, 1.0])
    Kinv = np.diag([1.0 / focal, 1.0 / focal, 1.0])
    H = K @ Q @ Kinv @ model.matrix
    return GeometricModel(ModelKind.HOMOGRAPHY, H / np.linalg.norm(H))
