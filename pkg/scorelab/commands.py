"""One function per CLI subcommand; each returns a Result and writes its files once, at the end."""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from tqdm import tqdm

from . import storage
from .core import ConfigError, ModelKind, Result, ScoreLabError
from .evalharness.experiments import (
    ERROR_BINS,
    consistency_experiment,
    parity_experiment,
    selectivity_experiment,
)
from .evalharness.grids import DEFAULT_BINS, ORACLE, default_tau_max, direct_selection, precompute_error_grid
from .evalharness.magsac_fit import fit_magsac_to_gau
from .evalharness.validation import (
    bootstrap_median_ci,
    large_validation,
    median_and_maa,
    small_validation_sensitivity,
)
from .geometry.metrics import pool_pose_errors, pose_error
from .geometry.poses import decompose_essential
from .geometry.sampson import pool_residuals, residual_vector
from .learnscore import R_MAX, equivalent_threshold, fit_inlier_density, learned_score_table
from .localopt.lma import LmaConfig, irls_lma
from .scoring.functions import Family, ScoreSpec, rho
from .scoring.histogram import histogram_residuals
from .synth.perturb import PerturbMode
from .synth.pools import MAX_PERTURBATION_DEG, PoolMix, generate_pool
from .synth.scenes import SceneConfig, generate_scenes

logger = logging.getLogger(__name__)

SCENES_DIR = "scenes"
POOLS_DIR = "pools"
PARITY_RANGE = (0.1, 40.0, 200)
GRIDS_DIR = "grids"
CURVES_DIR = "curves"


@dataclass
class RunConfig:
    """Global run settings plus the subcommand's own parameters."""

    command: str
    seed: int
    out: Path
    threads: int = 1
    progress: bool = False
    params: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default=None):
        value = self.params.get(key)
        return default if value is None else value

    def require(self, key: str):
        value = self.params.get(key)
        if value is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required")
        return value

    def path(self, key: str, default: str) -> Path:
        value = self.params.get(key)
        return Path(value) if value is not None else self.out / default


def _child_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def _fan_out(cfg: RunConfig, fn: Callable, items, desc: str) -> list:
    items = list(items)
    with ThreadPoolExecutor(max_workers=max(1, int(cfg.threads))) as ex:
        return list(tqdm(ex.map(fn, items), total=len(items), disable=not cfg.progress, desc=desc))


def _stem_index(path: Path) -> str:
    return path.stem.split("_", 1)[1]


def _load_scenes(cfg: RunConfig):
    paths = storage.list_scenes(cfg.path("scenes", SCENES_DIR))
    return [_stem_index(p) for p in paths], [storage.read_scene(p) for p in paths]


def _load_pairs(cfg: RunConfig):
    ids, scenes = _load_scenes(cfg)
    pool_dir = cfg.path("pools", POOLS_DIR)
    missing = [i for i in ids if not (pool_dir / f"pool_{i}.json").is_file()]
    if missing:
        raise ConfigError(f"no pool for scenes {', '.join(missing)} in {pool_dir}")
    pools = [storage.read_pool(pool_dir / f"pool_{i}.json") for i in ids]
    for i, s, p in zip(ids, scenes, pools):
        if p.kind is not None and p.kind is not s.gt_model.kind:
            raise ConfigError(f"scene {i} is {s.gt_model.kind.value} but its pool holds {p.kind.value} models")
    return ids, scenes, pools


def _spec(cfg: RunConfig, family: Optional[str] = None) -> ScoreSpec:
    fam = Family(family or cfg.get("family", Family.MSAC.value))
    table = storage.read_table(cfg.require("table")) if fam is Family.LEARNED else None
    tau = float(cfg.get("tau", table.tau_max / 2 if table is not None else 1.0))
    return ScoreSpec(fam, tau, cfg.get("sigma"), int(cfg.get("nu", 4)), table)


def _thresholds(cfg: RunConfig, default=(0.1, 10.0, 200)) -> np.ndarray:
    lo, hi, count = (float(v) for v in cfg.get("thresholds", default))
    if not 0 < lo < hi or count < 1:
        raise ConfigError("thresholds need 0 < min < max and a positive count")
    return np.geomspace(lo, hi, int(count))


def _ok(cfg: RunConfig, output: Path, files, notes: str, source: Optional[str] = None) -> Result:
    files = [str(f) for f in files]
    logger.info("%s wrote %d files under %s", cfg.command, len(files), cfg.out)
    return Result(cfg.command, "ok", str(output), source, notes, files)


def cmd_synth(cfg: RunConfig) -> Result:
    base = SceneConfig(kind=cfg.require("kind"), n=int(cfg.get("n", 500)), gamma=float(cfg.get("gamma", 0.5)),
                       sigma=float(cfg.get("sigma", 1.0)), focal=float(cfg.get("focal", 800.0)),
                       seed=cfg.seed)
    count = int(cfg.get("count", 1))
    if count < 1:
        raise ConfigError("count must be positive")
    scenes = generate_scenes(base, count, cfg.seed)
    out = cfg.out / SCENES_DIR
    files = []
    for i, scene in enumerate(scenes):
        files += storage.write_scene(out, f"scene_{i:04d}", scene)
    notes = f"{count} scene(s): kind={base.kind.value} n={base.n} gamma={base.gamma:g} sigma={base.sigma:g}"
    return _ok(cfg, out, files, notes)


def cmd_pool(cfg: RunConfig) -> Result:
    ids, scenes = _load_scenes(cfg)
    m = int(cfg.get("m", 1000))
    mix = PoolMix(*(float(v) for v in cfg.get("mix", (1.0, 0.0, 0.0))))
    max_theta = float(cfg.get("max_theta", MAX_PERTURBATION_DEG))
    seeds = _child_seeds(cfg.seed, len(scenes))
    pools = _fan_out(cfg, lambda k: generate_pool(scenes[k], m, mix, seeds[k], max_theta), range(len(scenes)),
                     "pools")
    out = cfg.out / POOLS_DIR
    files = [storage.write_pool(out / f"pool_{i}.json", p) for i, p in zip(ids, pools)]
    return _ok(cfg, out, files, f"{len(pools)} pool(s) of {m} models")


def cmd_score(cfg: RunConfig) -> Result:
    ids, scenes, pools = _load_pairs(cfg)
    spec = _spec(cfg)

    def work(k):
        scores = rho(spec, pool_residuals(pools[k], scenes[k].correspondences)).sum(axis=1)
        errs = pool_pose_errors(pools[k], scenes[k].gt_pose) if scenes[k].gt_pose is not None else None
        return scores, errs

    results = _fan_out(cfg, work, range(len(scenes)), "score")
    rows, best = [], {}
    for i, pool, (scores, errs) in zip(ids, pools, results):
        for j, (s, prov) in enumerate(zip(scores, pool.provenance)):
            rows.append([i, str(j), prov.value, s, "nan" if errs is None else errs[j]])
        b = int(np.argmax(scores))
        best[i] = {"model": b, "score": float(scores[b]), "error": None if errs is None else float(errs[b])}
    out = cfg.out / f"scores_{spec.family.value}.csv"
    files = [storage.write_table_csv(out, ["instance", "model", "provenance", "score", "error"], rows),
             storage.write_json(cfg.out / f"best_{spec.family.value}.json",
                                {"family": spec.family.value, "tau": spec.tau, "sigma": spec.sigma, "best": best})]
    return _ok(cfg, out, files, f"scored {len(scenes)} pool(s) with {spec.family.value} tau={spec.tau:g}",
               spec.family.value)


def cmd_lo(cfg: RunConfig) -> Result:
    ids, scenes, pools = _load_pairs(cfg)
    spec = _spec(cfg)
    lma = LmaConfig(max_iter=int(cfg.get("max_iter", LmaConfig.max_iter)))

    def work(k):
        scene, pool = scenes[k], pools[k]
        model = pool.models[direct_selection(scene, pool, spec)]
        focal = scene.config.focal
        if model.kind is ModelKind.ESSENTIAL:
            start = decompose_essential(model, scene.gt_pose)
            refined, trace = irls_lma(spec, start, scene.correspondences, lma, focal)
            return trace, pose_error(start, scene.gt_pose).e, pose_error(refined, scene.gt_pose).e
        refined, trace = irls_lma(spec, model, scene.correspondences, lma, focal)
        before = float(np.sum(rho(spec, residual_vector(model, scene.correspondences))))
        after = float(np.sum(rho(spec, residual_vector(refined, scene.correspondences))))
        return trace, -before, -after

    results = _fan_out(cfg, work, range(len(scenes)), "lo")
    out = cfg.out / "lo"
    files, rows = [], []
    for i, (trace, before, after) in zip(ids, results):
        files.append(storage.write_trace(out / f"trace_{i}.csv", trace))
        rows.append([i, trace.status, str(len(trace.iterations)), before, after])
    # essential rows hold pose errors in degrees, homography rows the robust objective
    files.append(storage.write_table_csv(out / "summary.csv", ["instance", "status", "iterations", "before", "after"],
                                         rows))
    improved = sum(1 for r in rows if r[4] <= r[3])
    return _ok(cfg, out, files, f"{improved}/{len(rows)} instances not worse after LO", spec.family.value)


def cmd_learn(cfg: RunConfig) -> Result:
    """Fit the monotone inlier density to GT-model residuals pooled over all scenes."""
    _, scenes = _load_scenes(cfg)
    K = int(cfg.get("bins", DEFAULT_BINS))
    tau_max = float(cfg.get("tau_max", 20.0))
    gamma = float(cfg.get("gamma", np.mean([s.config.gamma for s in scenes])))
    r = np.concatenate([residual_vector(s.gt_model, s.correspondences) for s in scenes])
    hist = histogram_residuals(r, tau_max, K)
    params = fit_inlier_density(hist, gamma, iters=int(cfg.get("iters", 200)), r_max=float(cfg.get("r_max", R_MAX)))
    table = learned_score_table(params)
    tau_eq = equivalent_threshold(params)
    out = cfg.out / "learned"
    files = [storage.write_density_params(out / "params.json", params), storage.write_table(out / "table.json", table),
             storage.write_json(out / "summary.json", {"K": K, "tau_max": tau_max, "gamma": gamma,
                                                       "residuals": int(r.size), "equivalent_threshold": tau_eq,
                                                       "informative": table.informative})]
    tau_txt = "none" if tau_eq is None else f"{tau_eq:.4g}"
    return _ok(cfg, out, files, f"learned table K={K} tau_max={tau_max:g}, equivalent threshold {tau_txt}",
               Family.LEARNED.value)


def cmd_magsac_fit(cfg: RunConfig) -> Result:
    fits = [fit_magsac_to_gau(int(nu)) for nu in cfg.get("nu", (4, 6, 8))]
    out = cfg.out / "magsac_fit.json"
    storage.write_json(out, {"fits": [f.to_dict() for f in fits]})
    notes = "; ".join(f"nu={f.nu}: kappa={f.kappa:.4g} tau={f.tau:.3g} sigma={f.sigma:.3g}" for f in fits)
    return _ok(cfg, out, [out], notes)


def cmd_sweep(cfg: RunConfig) -> Result:
    ids, scenes, pools = _load_pairs(cfg)
    th = _thresholds(cfg)
    K = int(cfg.get("bins", DEFAULT_BINS))
    tau_max = float(cfg.get("tau_max", default_tau_max(th)))
    methods = list(cfg.get("methods", (Family.MSAC.value, ORACLE)))
    files, chosen = [], {}
    for method in methods:
        tables = None
        if method == ORACLE:
            spec = ORACLE
        else:
            spec = _spec(cfg, method).with_tau(float(th[0]))
            if spec.family is Family.LEARNED:
                tables = [spec.table] * th.size
        grid = precompute_error_grid(scenes, pools, spec, th, tau_max, K, cfg.threads, cfg.progress, ids, tables)
        tau, curve = large_validation(grid)
        files += storage.write_grid(cfg.out / GRIDS_DIR / f"{grid.method}.csv", grid)
        files.append(storage.write_curve(cfg.out / CURVES_DIR / f"{grid.method}.csv", th, curve, "median"))
        chosen[grid.method] = {"threshold": None if method == ORACLE else tau, "median": float(curve.min())}
        logger.info("%s: best threshold %.4g, median %.4g deg", grid.method, tau, curve.min())
    out = cfg.out / "chosen.json"
    files.append(storage.write_json(out, {"K": K, "tau_max": tau_max, "methods": chosen}))
    notes = ", ".join(f"{k}={v['median']:.4g}" for k, v in chosen.items())
    return _ok(cfg, out, files, f"best medians (deg): {notes}")


def _split_grid(grid):
    half = grid.shape[0] // 2
    if half < 1:
        raise ConfigError("splitting needs at least two instances")
    return grid.subset(np.arange(half)), grid.subset(np.arange(half, grid.shape[0]))


def cmd_sensitivity(cfg: RunConfig) -> Result:
    grid = storage.read_grid(cfg.require("grid"))
    if cfg.get("test_grid") is not None:
        val, test = grid, storage.read_grid(cfg.get("test_grid"))
    else:
        val, test = _split_grid(grid)
    n_values = [int(n) for n in cfg.get("n_values", (1, 2, 5, 10, 20, val.shape[0]))]
    n_values = sorted({min(n, val.shape[0]) for n in n_values})
    rep = small_validation_sensitivity(val, test, n_values, int(cfg.get("trials", 1000)), cfg.seed)
    out = cfg.out / f"sensitivity_{grid.method}.json"
    files = [storage.write_json(out, {"method": grid.method} | rep.to_dict()),
             storage.write_table_csv(cfg.out / CURVES_DIR / f"sensitivity_{grid.method}.csv",
                                     ["n", "expected_error", "error_std"],
                                     zip(rep.n_values, rep.expected_error, rep.error_std))]
    return _ok(cfg, out, files, f"{grid.method}: E[err] at n={n_values[0]} is {rep.expected_error[0]:.4g} deg",
               grid.method)


def cmd_selectivity(cfg: RunConfig) -> Result:
    _, scenes = _load_scenes(cfg)
    spec = _spec(cfg)
    modes = [PerturbMode(m) for m in cfg.get("modes", [m.value for m in PerturbMode])]
    theta_max, theta_step = (float(v) for v in cfg.get("theta", (20.0, 1.0)))
    thetas = np.arange(0.0, theta_max + 0.5 * theta_step, theta_step)
    res = selectivity_experiment(scenes, spec, modes, thetas, cfg.seed, float(cfg.get("min_gt_score", 5.0)),
                                 cfg.threads, cfg.progress)
    header = ["theta"] + [m.value for m in modes]
    rows = [[t] + [res.curves[m.value][b] for m in modes] for b, t in enumerate(res.thetas)]
    out = cfg.out / CURVES_DIR / f"selectivity_{spec.family.value}.csv"
    files = [storage.write_table_csv(out, header, rows),
             storage.write_json(cfg.out / f"selectivity_{spec.family.value}.json", res.to_dict())]
    return _ok(cfg, out, files, f"{res.kept} scenes kept, {res.excluded} excluded", spec.family.value)


def cmd_consistency(cfg: RunConfig) -> Result:
    _, scenes = _load_scenes(cfg)
    thresholds = [float(t) for t in cfg.get("taus", (0.5, 1.0, 2.0, 5.0))]
    bins = [float(e) for e in cfg.get("error_bins", ERROR_BINS)]
    res = consistency_experiment(scenes, thresholds, bins, cfg.seed, cfg.threads, cfg.progress)
    header = ["error_bin"] + [f"tau_{t:g}" for t in thresholds]
    rows = [[e] + list(res.mean_inliers[b]) for b, e in enumerate(bins)]
    out = cfg.out / CURVES_DIR / "consistency.csv"
    files = [storage.write_table_csv(out, header, rows),
             storage.write_json(cfg.out / "consistency.json", res.to_dict())]
    return _ok(cfg, out, files, f"{len(scenes)} scenes, {len(bins)} error bins")


def cmd_parity(cfg: RunConfig) -> Result:
    base = SceneConfig(kind=ModelKind.ESSENTIAL, n=int(cfg.get("n", 500)), gamma=float(cfg.get("gamma", 0.5)),
                       sigma=float(cfg.get("sigma", 1.0)))
    res = parity_experiment(base, int(cfg.get("count", 200)), int(cfg.get("m", 1000)), cfg.seed,
                            [Family(f) for f in cfg.get("methods", ("ransac", "msac", "gau_marginal", "magsac"))],
                            _thresholds(cfg, PARITY_RANGE), int(cfg.get("bins", DEFAULT_BINS)),
                            threads=cfg.threads, progress=cfg.progress)
    out = cfg.out / "parity.json"
    storage.write_json(out, res.to_dict())
    notes = ", ".join(f"{k}={v:.4g}" for k, v in res.best_median.items())
    verdict = "holds" if res.parity_holds() else "fails"
    return _ok(cfg, out, [out], f"best medians (deg): {notes}; parity {verdict}")


def cmd_report(cfg: RunConfig) -> Result:
    grid_dir = cfg.path("grids", GRIDS_DIR)
    grid_paths = sorted(grid_dir.glob("*.csv"))
    sens_paths = sorted(cfg.out.glob("sensitivity_*.json"))
    missing = [] if grid_paths else [str(grid_dir / "*.csv")]
    missing += [str(p.with_suffix(".json")) for p in grid_paths if not p.with_suffix(".json").is_file()]
    if missing:
        raise ConfigError(f"missing inputs: {', '.join(missing)}")
    methods = {}
    for p in grid_paths:
        grid = storage.read_grid(p)
        tau, curve = large_validation(grid)
        j = int(np.argmin(curve))
        med, maa = median_and_maa(grid.errors[:, j])
        lo, hi = bootstrap_median_ci(grid.errors[:, j], int(cfg.get("n_boot", 1000)), seed=cfg.seed)
        methods[grid.method] = {"threshold": None if grid.method == ORACLE else tau, "median": med, "maa": maa,
                                "median_ci": [lo, hi], "instances": grid.shape[0]}
    payload = {
        "methods": methods,
        "sensitivity": {storage.read_json(p)["method"]: storage.read_json(p) for p in sens_paths},
        "magsac_fit": [fit_magsac_to_gau(int(nu)).to_dict() for nu in cfg.get("nu", (4,))],
    }
    out = cfg.out / "report.json"
    storage.write_json(out, payload)
    return _ok(cfg, out, [out], f"{len(methods)} method(s) reported")


COMMANDS: dict[str, Callable[[RunConfig], Result]] = {
    "synth": cmd_synth,
    "pool": cmd_pool,
    "score": cmd_score,
    "lo": cmd_lo,
    "learn": cmd_learn,
    "magsac-fit": cmd_magsac_fit,
    "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity,
    "selectivity": cmd_selectivity,
    "consistency": cmd_consistency,
    "parity": cmd_parity,
    "report": cmd_report,
}


def run(cfg: RunConfig) -> Result:
    """Dispatch to the subcommand; library errors become an error Result."""
    handler = COMMANDS.get(cfg.command)
    if handler is None:
        return Result(cfg.command, "error", None, notes=f"unknown command {cfg.command!r}")
    logger.info("%s started (seed=%d)", cfg.command, cfg.seed)
    try:
        return handler(cfg)
    except (ScoreLabError, OSError) as exc:
        logger.error("%s failed: %s", cfg.command, exc)
        return Result(cfg.command, "error", None, type(exc).__name__, str(exc))
