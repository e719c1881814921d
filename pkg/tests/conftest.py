from __future__ import annotations

import numpy as np
import pytest

from scorelab.core import CorrespondenceSet, ModelKind, Pose
from scorelab.geometry.poses import compose_essential, rotation_about
from scorelab.synth.scenes import SceneConfig, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_pose(rng):
    axis = rng.normal(size=3)
    return Pose.from_matrix(rotation_about(axis, rng.uniform(5.0, 25.0)), rng.normal(size=3))


@pytest.fixture
def essential_scene():
    return generate_scene(SceneConfig(kind=ModelKind.ESSENTIAL, n=300, gamma=0.8, sigma=1.0, seed=7))


@pytest.fixture
def homography_scene():
    return generate_scene(SceneConfig(kind=ModelKind.HOMOGRAPHY, n=300, gamma=0.8, sigma=1.0, seed=11))


def project_pair(pose: Pose, X: np.ndarray, focal: float = 1.0) -> CorrespondenceSet:
    """Noiseless correspondences of world points X (n, 3) given in the first camera frame."""
    X2 = X @ pose.R.T + pose.t
    u = focal * X[:, :2] / X[:, 2:3]
    v = focal * X2[:, :2] / X2[:, 2:3]
    return CorrespondenceSet(np.column_stack([u, v]))


@pytest.fixture
def noiseless_essential(random_pose, rng):
    focal = 800.0
    X = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50), rng.uniform(4, 8, 50)])
    return random_pose, compose_essential(random_pose, focal), project_pair(random_pose, X, focal)
