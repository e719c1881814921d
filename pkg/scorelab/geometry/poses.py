from __future__ import annotations
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from ..core import ConfigError, DegenerateInputError, GeometricModel, ModelKind, ModelKindError, Pose

logger = logging.getLogger(__name__)

# E = U W V' or U W' V' with t = +-U[:, 2]
_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def skew(v: np.ndarray) -> np.ndarray:
    """[v]x, the cross-product matrix; accepts (..., 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def rotation_about(axis: np.ndarray, theta_deg: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(np.deg2rad(theta_deg) * axis).as_matrix()


def compose_essential(p: Pose, focal: float = 1.0) -> GeometricModel:
    """E = [t]x R for the convention X2 = R X1 + t."""
    return GeometricModel(ModelKind.ESSENTIAL, skew(p.t) @ p.R, focal)


def _proper_svd(E: np.ndarray):
    U, s, Vt = np.linalg.svd(E)
    # force det(U) = det(V) = +1 so that U W V' is a rotation
    U = U * np.where(np.linalg.det(U) < 0, -1.0, 1.0)[..., None, None]
    Vt = Vt * np.where(np.linalg.det(Vt) < 0, -1.0, 1.0)[..., None, None]
    return U, s, Vt


def essential_candidates(E: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """The four (R, t) pairs consistent with E."""
    U, _, Vt = _proper_svd(np.asarray(E, dtype=float))
    R1, R2 = U @ _W @ Vt, U @ _W.T @ Vt
    t = U[:, 2]
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def decompose_essential(m: GeometricModel, gt: Pose) -> Pose:
    """Candidate decomposition of m closest to gt in pose error."""
    from .metrics import rotation_angles, translation_angles

    if m.kind is not ModelKind.ESSENTIAL:
        raise ModelKindError(f"decompose_essential needs an essential model, got {m.kind.value}")
    if not np.any(m.matrix):
        raise DegenerateInputError("cannot decompose a zero matrix")
    cands = essential_candidates(m.matrix)
    Rs = np.stack([R for R, _ in cands])
    ts = np.stack([t for _, t in cands])
    e = np.maximum(rotation_angles(Rs, gt.R), translation_angles(ts, gt.t))
    R, t = cands[int(np.argmin(e))]
    return Pose.from_matrix(R, t)


def batched_essential_candidates(E: np.ndarray):
    """Rotations (m, 2, 3, 3) and translation directions (m, 3) for an (m, 3, 3) stack."""
    U, _, Vt = _proper_svd(E)
    R1 = U @ _W @ Vt
    R2 = U @ _W.T @ Vt
    return np.stack([R1, R2], axis=1), U[..., :, 2]


def project_to_essential(m: np.ndarray, focal: float = 1.0) -> GeometricModel:
    """Nearest essential matrix (Frobenius): both leading singular values replaced by their mean."""
    m = np.asarray(m, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(m)):
        raise ConfigError("matrix must be finite")
    if not np.any(m):
        raise DegenerateInputError("cannot project a zero matrix")
    U, s, Vt = np.linalg.svd(m)
    mean = 0.5 * (s[0] + s[1])
    return GeometricModel(ModelKind.ESSENTIAL, (U * np.array([mean, mean, 0.0])) @ Vt, focal)
