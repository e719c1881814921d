"""Scoring functions for RANSAC-style robust estimation and the tools to compare them."""
from .core import (
    ConfigError,
    Correspondence,
    CorrespondenceSet,
    DegenerateInputError,
    DiscretizationMismatchError,
    GeometricModel,
    ModelKind,
    ModelKindError,
    ModelPool,
    Pose,
    PoseError,
    Provenance,
    Result,
    ScoreLabError,
)

__version__ = "0.1.0"
