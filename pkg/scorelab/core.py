from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation


class ScoreLabError(Exception):
    """Base class for errors raised by scorelab."""


class ConfigError(ScoreLabError, ValueError):
    """A parameter violates its documented precondition."""


class ModelKindError(ScoreLabError, ValueError):
    """An operation received a model of the wrong kind."""


class DegenerateInputError(ScoreLabError, ValueError):
    """Input is degenerate (zero matrix, coincident points, ...)."""


class DiscretizationMismatchError(ScoreLabError, ValueError):
    """Score table and histogram do not share tau_max and K."""


class ModelKind(str, Enum):
    HOMOGRAPHY = "homography"
    ESSENTIAL = "essential"
    FUNDAMENTAL = "fundamental"


class Provenance(str, Enum):
    MINIMAL_SAMPLE = "minimal_sample"
    PERTURBATION = "perturbation"
    GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class Correspondence:
    u: np.ndarray  # pixels, first view
    v: np.ndarray  # pixels, second view

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).reshape(2))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ConfigError("correspondence coordinates must be finite")

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """n observations x_i = (u_i, v_i) stored as an (n, 4) array, optional inlier flags."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ConfigError(f"expected an (n, 4) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("correspondence coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=bool).reshape(-1)
            if labels.shape[0] != pts.shape[0]:
                raise ConfigError("labels must have the same length as items")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_items(cls, items: Sequence[Correspondence], labels=None) -> "CorrespondenceSet":
        pts = np.array([c.x for c in items], dtype=float).reshape(-1, 4)
        return cls(pts, labels)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[Correspondence]:
        return iter(self.items)

    @property
    def items(self) -> list[Correspondence]:
        return [Correspondence(p[:2], p[2:]) for p in self.points]

    @property
    def u(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def v(self) -> np.ndarray:
        return self.points[:, 2:]

    def subset(self, mask) -> "CorrespondenceSet":
        labels = None if self.labels is None else self.labels[mask]
        return CorrespondenceSet(self.points[mask], labels)

    def inliers(self) -> "CorrespondenceSet":
        if self.labels is None:
            raise ConfigError("set carries no labels")
        return self.subset(self.labels)


@dataclass(frozen=True, eq=False)
class Pose:
    """Relative pose: unit quaternion (x, y, z, w, scalar last) and unit translation direction."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        qn, tn = np.linalg.norm(q), np.linalg.norm(t)
        if not (np.isfinite(qn) and qn > 0):
            raise ConfigError("rotation quaternion must be non-zero and finite")
        if not (np.isfinite(tn) and tn > 0):
            raise ConfigError("translation must be non-zero and finite")
        object.__setattr__(self, "rotation", q / qn)
        object.__setattr__(self, "translation", t / tn)

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: np.ndarray) -> "Pose":
        return cls(Rotation.from_matrix(R).as_quat(), t)

    @property
    def R(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()

    @property
    def t(self) -> np.ndarray:
        return self.translation


@dataclass(frozen=True, eq=False)
class GeometricModel:
    """A tagged 3x3 model.

    Essential matrices act on focal-normalized coordinates (u / focal, 1);
    homographies and fundamental matrices act on pixel coordinates.
    """

    kind: ModelKind
    matrix: np.ndarray
    focal: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        object.__setattr__(self, "matrix", m)
        if not self.focal > 0:
            raise ConfigError("focal must be positive")
        object.__setattr__(self, "focal", float(self.focal))

    def pixel_matrix(self) -> np.ndarray:
        """Matrix acting on homogeneous pixel coordinates."""
        if self.kind is ModelKind.ESSENTIAL and self.focal != 1.0:
            d = np.array([1.0 / self.focal, 1.0 / self.focal, 1.0])
            return d[:, None] * self.matrix * d[None, :]
        return self.matrix


@dataclass(frozen=True)
class PoseError:
    e_R: float  # degrees
    e_t: float  # degrees
    e: float    # degrees, max(e_R, e_t)


@dataclass(frozen=True, eq=False)
class ModelPool:
    models: tuple[GeometricModel, ...]
    provenance: tuple[Provenance, ...]

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "provenance", tuple(Provenance(p) for p in self.provenance))
        if len(self.models) != len(self.provenance):
            raise ConfigError("one provenance tag per model is required")

    def __len__(self) -> int:
        return len(self.models)

    @property
    def kind(self) -> Optional[ModelKind]:
        return self.models[0].kind if self.models else None

    def stacked(self) -> np.ndarray:
        """(m, 3, 3) stack of pixel-space matrices."""
        if not self.models:
            return np.zeros((0, 3, 3))
        return np.stack([m.pixel_matrix() for m in self.models])


@dataclass
class Result:
    input: str
    status: str               # "ok" | "error"
    output: Optional[str]
    source: Optional[str] = None
    notes: Optional[str] = None
    files: list[str] = field(default_factory=list)
