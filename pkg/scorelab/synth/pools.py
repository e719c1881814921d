from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from ..core import ConfigError, GeometricModel, ModelKind, ModelPool, Provenance
from ..geometry.poses import compose_essential
from .perturb import PerturbMode, perturb_homography, perturb_model
from .scenes import SyntheticScene, make_rng
from .solvers import eightpoint_batch, homography_batch

logger = logging.getLogger(__name__)

MAX_PERTURBATION_DEG = 10.0
_DRAW_FACTOR = 50  # minimal draws allowed per requested model


@dataclass(frozen=True)
class PoolMix:
    """Provenance proportions; normalized on construction."""

    minimal: float = 1.0
    perturbation: float = 0.0
    ground_truth: float = 0.0

    def __post_init__(self):
        parts = np.array([self.minimal, self.perturbation, self.ground_truth], dtype=float)
        if np.any(parts < 0) or parts.sum() <= 0:
            raise ConfigError("pool mix needs non-negative proportions with a positive sum")
        parts /= parts.sum()
        object.__setattr__(self, "minimal", float(parts[0]))
        object.__setattr__(self, "perturbation", float(parts[1]))
        object.__setattr__(self, "ground_truth", float(parts[2]))

    def counts(self, m: int) -> tuple[int, int, int]:
        """Largest-remainder split of m models."""
        share = np.array([self.minimal, self.perturbation, self.ground_truth]) * m
        base = np.floor(share).astype(int)
        order = np.argsort(-(share - base), kind="stable")
        base[order[: m - base.sum()]] += 1
        return int(base[0]), int(base[1]), int(base[2])


def minimal_models(scene: SyntheticScene, count: int, rng: np.random.Generator) -> list[GeometricModel]:
    """Solver outputs on uniform minimal samples; degenerate draws are retried."""
    kind = scene.gt_model.kind
    pts = scene.correspondences.points
    n = pts.shape[0]
    k = 4 if kind is ModelKind.HOMOGRAPHY else 8
    focal = scene.config.focal
    out: list[np.ndarray] = []
    draws = 0
    while len(out) < count and draws < _DRAW_FACTOR * max(count, 1):
        batch = count - len(out) + 8
        draws += batch
        idx = np.argpartition(rng.random((batch, n)), k - 1, axis=1)[:, :k]
        sample = pts[idx]
        if kind is ModelKind.HOMOGRAPHY:
            M, ok = homography_batch(sample[..., :2], sample[..., 2:])
        else:
            M, ok = eightpoint_batch(sample[..., :2], sample[..., 2:], want_essential=True, focal=focal)
        if not ok.all():
            logger.debug("%d degenerate minimal samples redrawn", int((~ok).sum()))
        out.extend(M[ok][: count - len(out)])
    if len(out) < count:
        logger.warning("only %d of %d minimal models could be generated", len(out), count)
    if kind is ModelKind.HOMOGRAPHY:
        return [GeometricModel(kind, M) for M in out]
    return [GeometricModel(kind, M, focal) for M in out]


def perturbed_models(scene: SyntheticScene, count: int, rng: np.random.Generator,
                     max_theta: float = MAX_PERTURBATION_DEG) -> list[GeometricModel]:
    """GT deviations with theta ~ U[0, max_theta] and a random-axis mode."""
    models = []
    focal = scene.config.focal
    for _ in range(count):
        theta = float(rng.uniform(0.0, max_theta))
        seed = int(rng.integers(0, 2 ** 63))
        if scene.gt_pose is None:
            models.append(perturb_homography(scene.gt_model, focal, PerturbMode.RANDOM_ROT, theta, seed))
        else:
            mode = PerturbMode.RANDOM_ROT if rng.random() < 0.5 else PerturbMode.RANDOM_TRANS_ROT
            models.append(compose_essential(perturb_model(scene.gt_pose, mode, theta, seed), focal))
    return models


def generate_pool(scene: SyntheticScene, m: int, mix: PoolMix = PoolMix(), seed: int = 0,
                  max_theta: float = MAX_PERTURBATION_DEG) -> ModelPool:
    """Minimal-sample models first, then perturbations, then the GT model."""
    if int(m) != m or m < 1:
        raise ConfigError(f"m must be a positive integer, got {m}")
    n_min, n_pert, n_gt = mix.counts(int(m))
    ss_min, ss_pert = np.random.SeedSequence(seed).spawn(2)
    models = minimal_models(scene, n_min, make_rng(ss_min))
    provenance = [Provenance.MINIMAL_SAMPLE] * len(models)
    pert = perturbed_models(scene, n_pert, make_rng(ss_pert), max_theta)
    models += pert
    provenance += [Provenance.PERTURBATION] * len(pert)
    models += [scene.gt_model] * n_gt
    provenance += [Provenance.GROUND_TRUTH] * n_gt
    return ModelPool(tuple(models), tuple(provenance))
