from .sampson import pool_residuals, residual_matrix, residual_vector, sampson_residual
from .poses import compose_essential, decompose_essential, project_to_essential, skew, rotation_about
from .metrics import pose_error, pool_pose_errors

__all__ = [
    "sampson_residual",
    "residual_vector",
    "residual_matrix",
    "pool_residuals",
    "compose_essential",
    "decompose_essential",
    "project_to_essential",
    "skew",
    "rotation_about",
    "pose_error",
    "pool_pose_errors",
]
