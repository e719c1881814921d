from __future__ import annotations
import numpy as np

from .core import GeometricModel, ModelKind

# relative tolerances on normalized singular values
ESSENTIAL_TOL = 1e-9
RANK2_TOL = 1e-9


def _spectrum(m: np.ndarray) -> np.ndarray | None:
    if not np.all(np.isfinite(m)):
        return None
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] <= 0:
        return None
    return s / s[0]


def looks_like_essential(m: np.ndarray) -> bool:
    s = _spectrum(m)
    return s is not None and abs(s[1] - 1.0) <= ESSENTIAL_TOL and s[2] <= ESSENTIAL_TOL


def looks_like_fundamental(m: np.ndarray) -> bool:
    s = _spectrum(m)
    return s is not None and s[2] <= RANK2_TOL and s[1] > RANK2_TOL


def looks_like_homography(m: np.ndarray) -> bool:
    s = _spectrum(m)
    return s is not None and s[2] > 1e-12


def validate_model(model: GeometricModel) -> bool:
    if model.kind is ModelKind.ESSENTIAL:
        return looks_like_essential(model.matrix)
    if model.kind is ModelKind.FUNDAMENTAL:
        return looks_like_fundamental(model.matrix)
    return looks_like_homography(model.matrix)
