"""Score consistency, score selectivity and the scoring-family parity run."""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..core import ConfigError, ModelKindError
from ..geometry.poses import compose_essential
from ..geometry.sampson import residual_vector
from ..scoring.functions import Family, ScoreSpec, rho
from ..synth.perturb import PerturbMode, perturb_model
from ..synth.pools import PoolMix, generate_pool
from ..synth.scenes import SceneConfig, SyntheticScene, generate_scenes
from .grids import DEFAULT_BINS, ORACLE, precompute_error_grid
from .validation import large_validation

logger = logging.getLogger(__name__)

MIN_GT_SCORE = 5.0
ERROR_BINS = (0.0, 2.0, 5.0, 10.0, 20.0)
THETA_GRID = tuple(float(t) for t in np.arange(0.0, 21.0, 1.0))
ALL_MODES = tuple(PerturbMode)


def _require_pose(scenes: Sequence[SyntheticScene]):
    for s in scenes:
        if s.gt_pose is None:
            raise ModelKindError("this experiment needs essential scenes")


def _scene_seeds(seed: int, count: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)


def _perturbed_residuals(scene: SyntheticScene, mode: PerturbMode, theta: float, seed: int) -> np.ndarray:
    pose = perturb_model(scene.gt_pose, mode, theta, seed)
    return residual_vector(compose_essential(pose, scene.config.focal), scene.correspondences)


@dataclass
class SelectivityResult:
    thetas: tuple[float, ...]
    curves: dict[str, np.ndarray]          # mode -> mean relative score per theta
    kept: int
    excluded: int
    stds: dict[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "thetas": list(self.thetas),
            "curves": {k: v.tolist() for k, v in self.curves.items()},
            "stds": {k: v.tolist() for k, v in self.stds.items()},
            "kept": self.kept,
            "excluded": self.excluded,
        }


def selectivity_experiment(scenes: Sequence[SyntheticScene], spec: ScoreSpec,
                           modes: Sequence[PerturbMode] = ALL_MODES, theta_grid=THETA_GRID, seed: int = 0,
                           min_gt_score: float = MIN_GT_SCORE, threads: int = 1,
                           progress: bool = False) -> SelectivityResult:
    """Mean over scenes of Q(perturbed) / Q(GT) per mode and theta.

    Scenes whose GT score is below min_gt_score are dropped; each (scene, mode)
    keeps one perturbation seed across all theta.
    """
    _require_pose(scenes)
    modes = [PerturbMode(m) for m in modes]
    thetas = tuple(float(t) for t in theta_grid)
    seeds = _scene_seeds(seed, len(scenes))

    def work(i):
        scene = scenes[i]
        q_gt = float(np.sum(rho(spec, residual_vector(scene.gt_model, scene.correspondences))))
        if q_gt < min_gt_score:
            return None
        mode_seeds = np.random.SeedSequence(int(seeds[i])).generate_state(len(modes), dtype=np.uint64)
        out = np.empty((len(modes), len(thetas)))
        for a, (mode, ms) in enumerate(zip(modes, mode_seeds)):
            for b, theta in enumerate(thetas):
                r = _perturbed_residuals(scene, mode, theta, int(ms))
                out[a, b] = float(np.sum(rho(spec, r))) / q_gt
        return out

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        rows = list(tqdm(ex.map(work, range(len(scenes))), total=len(scenes), disable=not progress,
                         desc="selectivity"))
    kept = [r for r in rows if r is not None]
    excluded = len(rows) - len(kept)
    if excluded:
        logger.warning("%d scenes excluded with GT score below %g", excluded, min_gt_score)
    if not kept:
        raise ConfigError("no scene passes the GT score filter")
    stack = np.stack(kept)  # (scenes, modes, thetas)
    curves = {m.value: stack[:, a].mean(axis=0) for a, m in enumerate(modes)}
    stds = {m.value: stack[:, a].std(axis=0) for a, m in enumerate(modes)}
    return SelectivityResult(thetas, curves, len(kept), excluded, stds)


@dataclass
class ConsistencyResult:
    error_bins: tuple[float, ...]
    thresholds: tuple[float, ...]
    mean_inliers: np.ndarray   # (bins, thresholds)

    def to_dict(self) -> dict:
        return {"error_bins": list(self.error_bins), "thresholds": list(self.thresholds),
                "mean_inliers": self.mean_inliers.tolist()}


def consistency_experiment(scenes: Sequence[SyntheticScene], thresholds: Sequence[float],
                           error_bins: Sequence[float] = ERROR_BINS, seed: int = 0, threads: int = 1,
                           progress: bool = False) -> ConsistencyResult:
    """Mean inlier count (r < tau) of random-axis perturbations at each prescribed pose error."""
    _require_pose(scenes)
    th = np.asarray(thresholds, dtype=float)
    bins = tuple(float(e) for e in error_bins)
    seeds = _scene_seeds(seed, len(scenes))

    def work(i):
        scene = scenes[i]
        counts = np.empty((len(bins), th.size))
        for b, err in enumerate(bins):
            r = _perturbed_residuals(scene, PerturbMode.RANDOM_ROT, err, int(seeds[i]) + b)
            counts[b] = np.count_nonzero(r[None, :] < th[:, None], axis=1)
        return counts

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        rows = list(tqdm(ex.map(work, range(len(scenes))), total=len(scenes), disable=not progress,
                         desc="consistency"))
    return ConsistencyResult(bins, tuple(float(t) for t in th), np.mean(np.stack(rows), axis=0))


PARITY_THRESHOLDS = np.geomspace(0.1, 40.0, 200)
PARITY_AGREEMENT = 0.02
RANSAC_MARGIN = 0.05


@dataclass
class ParityResult:
    best_median: dict[str, float]
    best_threshold: dict[str, Optional[float]]
    curves: dict[str, np.ndarray]
    thresholds: np.ndarray

    def edge_optima(self) -> list[str]:
        """Families whose best threshold is the largest one swept."""
        top = float(self.thresholds[-1])
        return [k for k, t in self.best_threshold.items() if t is not None and t >= top]

    def spread(self) -> Optional[float]:
        """max / min - 1 over the best medians of the non-RANSAC families."""
        others = [v for k, v in self.best_median.items() if k not in (Family.RANSAC.value, ORACLE)]
        if not others or min(others) <= 0:
            return None
        return max(others) / min(others) - 1.0

    def ransac_gap(self) -> Optional[float]:
        """RANSAC best median relative to the worst non-RANSAC family, minus one."""
        others = [v for k, v in self.best_median.items() if k not in (Family.RANSAC.value, ORACLE)]
        if Family.RANSAC.value not in self.best_median or not others or max(others) <= 0:
            return None
        return self.best_median[Family.RANSAC.value] / max(others) - 1.0

    def parity_holds(self, agreement: float = PARITY_AGREEMENT, margin: float = RANSAC_MARGIN) -> bool:
        spread, gap = self.spread(), self.ransac_gap()
        return spread is not None and gap is not None and spread <= agreement and gap >= margin

    def to_dict(self) -> dict:
        return {
            "best_median": dict(self.best_median),
            "best_threshold": dict(self.best_threshold),
            "thresholds": self.thresholds.tolist(),
            "curves": {k: v.tolist() for k, v in self.curves.items()},
            "spread": self.spread(),
            "ransac_gap": self.ransac_gap(),
            "parity_holds": self.parity_holds(),
            "edge_optima": self.edge_optima(),
        }


DEFAULT_FAMILIES = (Family.RANSAC, Family.MSAC, Family.GAU_MARGINAL, Family.MAGSAC)


def parity_experiment(base: SceneConfig, n_scenes: int = 200, pool_size: int = 1000, seed: int = 0,
                      families: Sequence[Family] = DEFAULT_FAMILIES, thresholds=PARITY_THRESHOLDS,
                      K: int = DEFAULT_BINS, nu: int = 4, threads: int = 1, progress: bool = False,
                      mix: PoolMix = PoolMix()) -> ParityResult:
    """Best validated median pose error per scoring family on shared minimal-sample pools, plus the Oracle."""
    scene_seed, pool_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    scenes = generate_scenes(base, n_scenes, int(scene_seed))
    pool_seeds = _scene_seeds(int(pool_seed), n_scenes)
    pools = [generate_pool(s, pool_size, mix, int(ps))
             for s, ps in tqdm(list(zip(scenes, pool_seeds)), disable=not progress, desc="pools")]
    th = np.asarray(thresholds, dtype=float)
    best_median, best_tau, curves = {}, {}, {}
    for fam in families:
        spec = ScoreSpec(Family(fam), float(th[0]), nu=nu)
        grid = precompute_error_grid(scenes, pools, spec, th, K=K, threads=threads, progress=progress)
        tau, curve = large_validation(grid)
        best_median[grid.method], best_tau[grid.method], curves[grid.method] = float(curve.min()), tau, curve
    grid = precompute_error_grid(scenes, pools, ORACLE, th, threads=threads)
    _, curve = large_validation(grid)
    best_median[ORACLE], best_tau[ORACLE], curves[ORACLE] = float(curve.min()), None, curve
    res = ParityResult(best_median, best_tau, curves, th)
    logger.info("parity medians: %s", {k: round(v, 4) for k, v in best_median.items()})
    if res.edge_optima():
        logger.warning("best threshold at the top of the sweep for %s; widen the threshold range",
                       ", ".join(res.edge_optima()))
    return res
