"""Two-view synthetic scenes.

Inliers are noisy projections of 3D points visible in both cameras
(X2 = R X1 + t); outliers are independent uniform points in both images.
Homography scenes place the points on a plane n'X1 = d.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..core import ConfigError, CorrespondenceSet, DegenerateInputError, GeometricModel, ModelKind, Pose
from ..geometry.poses import compose_essential, rotation_about

logger = logging.getLogger(__name__)

FOCAL = 800.0
EXTENT = (1000.0, 1000.0)
DEPTH_RANGE = (4.0, 8.0)
MAX_ROTATION_DEG = 30.0
PLANE_DISTANCE = 6.0
PLANE_TILT_DEG = 30.0
_MAX_DRAW_ROUNDS = 200


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator for an int seed or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


def random_unit(rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform direction(s) on the sphere (normalized standard normals)."""
    d = rng.standard_normal((3,) if size is None else (size, 3))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class SceneConfig:
    kind: ModelKind = ModelKind.ESSENTIAL
    n: int = 500
    gamma: float = 0.5
    sigma: float = 1.0
    image_extent: tuple[float, float] = EXTENT
    seed: int = 0
    focal: float = FOCAL
    max_rotation_deg: float = MAX_ROTATION_DEG

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "image_extent", tuple(float(x) for x in self.image_extent))
        if self.kind is ModelKind.FUNDAMENTAL:
            raise ConfigError("scenes are generated for homography or essential models")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError(f"n must be an integer >= 8, got {self.n}")
        if not (self.focal > 0 and min(self.image_extent) > 0):
            raise ConfigError("focal and image extent must be positive")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.diag([self.focal, self.focal, 1.0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n": int(self.n),
            "gamma": float(self.gamma),
            "sigma": float(self.sigma),
            "image_extent": list(self.image_extent),
            "seed": int(self.seed),
            "focal": float(self.focal),
            "max_rotation_deg": float(self.max_rotation_deg),
        }


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    config: SceneConfig
    gt_model: GeometricModel
    correspondences: CorrespondenceSet
    gt_pose: Optional[Pose] = None
    plane: Optional[np.ndarray] = field(default=None)  # (n_x, n_y, n_z, d), homography scenes only

    @property
    def labels(self) -> np.ndarray:
        return self.correspondences.labels


def _in_extent(xy: np.ndarray, extent) -> np.ndarray:
    w, h = extent
    return (np.abs(xy[..., 0]) <= 0.5 * w) & (np.abs(xy[..., 1]) <= 0.5 * h)


def _uniform_pixels(rng, count: int, extent) -> np.ndarray:
    w, h = extent
    return np.column_stack([rng.uniform(-0.5 * w, 0.5 * w, count), rng.uniform(-0.5 * h, 0.5 * h, count)])


def random_relative_pose(rng: np.random.Generator, max_rotation_deg: float = MAX_ROTATION_DEG) -> Pose:
    R = rotation_about(random_unit(rng), rng.uniform(0.0, max_rotation_deg))
    return Pose.from_matrix(R, random_unit(rng))


def _project(X: np.ndarray, f: float) -> np.ndarray:
    return f * X[:, :2] / X[:, 2:3]


def _visible_pairs(rng, count: int, cfg: SceneConfig, R: np.ndarray, t: np.ndarray, plane=None):
    """Rejection-sample `count` true correspondences visible in both views."""
    f = cfg.focal
    got = [np.zeros((0, 4))]
    have = 0
    for _ in range(_MAX_DRAW_ROUNDS):
        if have >= count:
            break
        batch = 2 * (count - have) + 16
        u = _uniform_pixels(rng, batch, cfg.image_extent)
        rays = np.column_stack([u / f, np.ones(batch)])
        if plane is None:
            X1 = rays * rng.uniform(*DEPTH_RANGE, batch)[:, None]
        else:
            normal, d = plane[:3], plane[3]
            denom = rays @ normal
            with np.errstate(divide="ignore"):
                depth = np.where(denom > 1e-9, d / denom, -1.0)
            X1 = rays * depth[:, None]
        X2 = X1 @ R.T + t
        ok = (X1[:, 2] > 1e-6) & (X2[:, 2] > 1e-6)
        v = np.full_like(u, np.inf)
        v[ok] = _project(X2[ok], f)
        ok &= _in_extent(v, cfg.image_extent)
        got.append(np.column_stack([u[ok], v[ok]]))
        have += int(ok.sum())
    else:
        if have < count:
            raise DegenerateInputError("camera configuration leaves too few visible points")
    return np.concatenate(got)[:count]


def _random_plane(rng) -> np.ndarray:
    tilt = rotation_about(random_unit(rng), rng.uniform(0.0, PLANE_TILT_DEG))
    normal = tilt @ np.array([0.0, 0.0, 1.0])
    return np.concatenate([normal, [PLANE_DISTANCE]])


def plane_homography(pose: Pose, plane: np.ndarray, focal: float) -> np.ndarray:
    """H = K (R + t n' / d) K^-1, scaled so that ||H||_F = 1."""
    K = np.diag([focal, focal, 1.0])
    Kinv = np.diag([1.0 / focal, 1.0 / focal, 1.0])
    H = K @ (pose.R + np.outer(pose.t, plane[:3]) / plane[3]) @ Kinv
    return H / np.linalg.norm(H)


def generate_scene(config: SceneConfig) -> SyntheticScene:
    """Deterministic in config.seed."""
    rng = make_rng(config.seed)
    pose = random_relative_pose(rng, config.max_rotation_deg)
    labels = rng.random(config.n) < config.gamma
    n_in = int(labels.sum())

    plane = None
    if config.kind is ModelKind.HOMOGRAPHY:
        plane = _random_plane(rng)
        gt = GeometricModel(ModelKind.HOMOGRAPHY, plane_homography(pose, plane, config.focal))
    else:
        gt = compose_essential(pose, config.focal)

    points = np.empty((config.n, 4))
    clean = _visible_pairs(rng, n_in, config, pose.R, pose.t, plane)
    points[labels] = clean + rng.normal(0.0, config.sigma, clean.shape)
    n_out = config.n - n_in
    points[~labels] = np.column_stack([
        _uniform_pixels(rng, n_out, config.image_extent),
        _uniform_pixels(rng, n_out, config.image_extent),
    ])
    logger.debug("scene seed=%d kind=%s inliers=%d/%d", config.seed, config.kind.value, n_in, config.n)
    return SyntheticScene(
        config=config,
        gt_model=gt,
        correspondences=CorrespondenceSet(points, labels),
        gt_pose=pose if config.kind is ModelKind.ESSENTIAL else None,
        plane=plane,
    )


def generate_scenes(base: SceneConfig, count: int, seed: int) -> list[SyntheticScene]:
    """`count` scenes sharing `base` parameters with seeds spawned from `seed`."""
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [generate_scene(replace(base, seed=int(s))) for s in seeds]
