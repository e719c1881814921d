"""Error grids: selected-model pose error per instance and threshold.

Each pool model's residuals are histogrammed once; the whole threshold sweep
is then a single (m, K) x (K, T) product and the argmax per column picks the
model (first maximum wins).
"""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from ..core import ConfigError, ModelKind, ModelKindError, ModelPool
from ..geometry.metrics import pool_pose_errors
from ..geometry.sampson import pool_residuals
from ..scoring.functions import ScoreSpec, ScoreTable, rho
from ..scoring.histogram import build_score_table, histogram_matrix, select_best, sweep_matrix, weight_matrix
from ..synth.scenes import SyntheticScene

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = np.geomspace(0.1, 10.0, 200)
DEFAULT_BINS = 500
ORACLE = "oracle"


@dataclass(frozen=True, eq=False)
class ErrorGrid:
    instance_ids: tuple[str, ...]
    thresholds: np.ndarray
    errors: np.ndarray   # (instances, T), degrees
    method: str

    def __post_init__(self):
        object.__setattr__(self, "instance_ids", tuple(str(i) for i in self.instance_ids))
        th = np.asarray(self.thresholds, dtype=float).reshape(-1)
        err = np.asarray(self.errors, dtype=float).reshape(len(self.instance_ids), th.size)
        if np.any(err < 0):
            raise ConfigError("pose errors must be non-negative")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "errors", err)

    @property
    def shape(self) -> tuple[int, int]:
        return self.errors.shape

    def subset(self, rows) -> "ErrorGrid":
        rows = np.asarray(rows)
        return ErrorGrid(tuple(np.asarray(self.instance_ids)[rows]), self.thresholds, self.errors[rows], self.method)


def default_tau_max(thresholds) -> float:
    return 2.0 * float(np.max(thresholds))


def threshold_weights(spec: ScoreSpec, thresholds, tau_max: float, K: int) -> np.ndarray:
    """W (T, K): one score table per threshold, sigma scaled with tau."""
    return weight_matrix([build_score_table(spec.with_tau(float(t)), tau_max, K) for t in thresholds])


def method_name(spec: Union[ScoreSpec, str]) -> str:
    return ORACLE if isinstance(spec, str) else spec.family.value


def _instance_errors(scene: SyntheticScene, pool: ModelPool, spec, W, T: int, tau_max: float, K: int) -> np.ndarray:
    if len(pool) == 0:
        raise ConfigError("cannot select from an empty pool")
    if scene.gt_pose is None or pool.kind is not ModelKind.ESSENTIAL:
        raise ModelKindError("error grids need essential scenes with a ground-truth pose")
    errs = pool_pose_errors(pool, scene.gt_pose)
    if isinstance(spec, str):
        return np.full(T, errs.min())
    counts, _ = histogram_matrix(pool_residuals(pool, scene.correspondences), tau_max, K)
    return errs[select_best(sweep_matrix(W, counts))]


def precompute_error_grid(scenes: Sequence[SyntheticScene], pools: Sequence[ModelPool],
                          spec: Union[ScoreSpec, str], thresholds=DEFAULT_THRESHOLDS,
                          tau_max: Optional[float] = None, K: int = DEFAULT_BINS,
                          threads: int = 1, progress: bool = False,
                          instance_ids: Optional[Sequence[str]] = None,
                          tables: Optional[Sequence[ScoreTable]] = None) -> ErrorGrid:
    """spec is a ScoreSpec template (its tau is replaced by each threshold) or ORACLE.

    `tables` supplies one precomputed table per threshold instead, e.g. learned
    tables indexed by their equivalent threshold.
    """
    if len(scenes) != len(pools):
        raise ConfigError(f"{len(scenes)} scenes but {len(pools)} pools")
    if isinstance(spec, str) and spec != ORACLE:
        raise ConfigError(f"unknown method {spec!r}")
    thresholds = np.asarray(thresholds, dtype=float)
    tau_max = default_tau_max(thresholds) if tau_max is None else float(tau_max)
    if tables is not None:
        if len(tables) != thresholds.size:
            raise ConfigError("one table per threshold is required")
        W = weight_matrix(tables)
        tau_max, K = tables[0].tau_max, tables[0].K
    else:
        W = None if isinstance(spec, str) else threshold_weights(spec, thresholds, tau_max, K)
    T = thresholds.size

    def work(i):
        return _instance_errors(scenes[i], pools[i], spec, W, T, tau_max, K)

    idx = range(len(scenes))
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        rows = list(tqdm(ex.map(work, idx), total=len(scenes), disable=not progress,
                         desc=f"grid {method_name(spec)}"))
    ids = instance_ids if instance_ids is not None else [str(s.config.seed) for s in scenes]
    errors = np.vstack(rows) if rows else np.zeros((0, T))
    logger.info("error grid %s: %d instances x %d thresholds", method_name(spec), len(rows), T)
    return ErrorGrid(tuple(ids), thresholds, errors, method_name(spec))


def direct_selection(scene: SyntheticScene, pool: ModelPool, spec: ScoreSpec) -> int:
    """Index of the best pool model scored by summing rho over exact residuals."""
    scores = rho(spec, pool_residuals(pool, scene.correspondences)).sum(axis=1)
    return int(np.argmax(scores))
