from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ConfigError
from ..synth.scenes import make_rng
from .grids import ErrorGrid

logger = logging.getLogger(__name__)

MAA_CAP = 10.0


def lower_median(values, axis: int = 0):
    """Lower middle element along axis (no interpolation)."""
    a = np.sort(np.asarray(values, dtype=float), axis=axis)
    n = a.shape[axis]
    if n == 0:
        raise ConfigError("median of an empty set")
    return np.take(a, (n - 1) // 2, axis=axis)


def median_curve(grid: ErrorGrid) -> np.ndarray:
    return lower_median(grid.errors, axis=0)


def large_validation(grid: ErrorGrid) -> tuple[float, np.ndarray]:
    """Best threshold (lowest on ties) and the median-error curve."""
    if grid.shape[0] == 0:
        raise ConfigError("validation needs at least one instance")
    curve = median_curve(grid)
    return float(grid.thresholds[int(np.argmin(curve))]), curve


@dataclass(frozen=True)
class SensitivityReport:
    n_values: tuple[int, ...]
    expected_error: tuple[float, ...]
    error_std: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"n_values": list(self.n_values), "expected_error": list(self.expected_error),
                "error_std": list(self.error_std)}


def small_validation_sensitivity(val_grid: ErrorGrid, test_grid: ErrorGrid, n_values: Sequence[int],
                                 trials: int, seed: int) -> SensitivityReport:
    """Mean and population std of the test median at the threshold chosen on n random validation instances."""
    if val_grid.thresholds.shape != test_grid.thresholds.shape or not np.allclose(val_grid.thresholds, test_grid.thresholds):
        raise ConfigError("validation and test grids must share thresholds")
    if trials < 1:
        raise ConfigError("trials must be positive")
    n_val = val_grid.shape[0]
    test_curve = median_curve(test_grid)
    children = np.random.SeedSequence(seed).spawn(len(n_values))
    means, stds = [], []
    for n, child in zip(n_values, children):
        if not 1 <= n <= n_val:
            raise ConfigError(f"n={n} outside 1..{n_val} validation instances")
        rng = make_rng(child)
        picked = np.empty(trials)
        for j in range(trials):
            rows = rng.choice(n_val, size=n, replace=False)
            tau_idx = int(np.argmin(lower_median(val_grid.errors[rows], axis=0)))
            picked[j] = test_curve[tau_idx]
        means.append(float(picked.mean()))
        stds.append(float(picked.std()))
        logger.debug("sensitivity n=%d mean=%.6g std=%.6g", n, means[-1], stds[-1])
    return SensitivityReport(tuple(int(n) for n in n_values), tuple(means), tuple(stds))


def median_and_maa(errors, cap: float = MAA_CAP) -> tuple[float, float]:
    """Lower median and mean of max(0, 1 - e / cap)."""
    e = np.asarray(errors, dtype=float).reshape(-1)
    if e.size == 0:
        raise ConfigError("need at least one error")
    return float(lower_median(e)), float(np.mean(np.clip(1.0 - e / cap, 0.0, 1.0)))


def bootstrap_median_ci(errors, n_boot: int = 1000, alpha: float = 0.05, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the lower median."""
    e = np.asarray(errors, dtype=float).reshape(-1)
    if e.size == 0:
        raise ConfigError("need at least one error")
    rng = make_rng(seed)
    draws = e[rng.integers(0, e.size, size=(n_boot, e.size))]
    meds = lower_median(draws, axis=1)
    lo, hi = np.quantile(meds, [0.5 * alpha, 1.0 - 0.5 * alpha])
    return float(lo), float(hi)
