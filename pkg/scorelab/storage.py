"""CSV and JSON persistence for scenes, pools, tables, grids, curves and reports.

Data files carry 17 significant digits so reloads are exact; curves and
reports use 9.
"""
from __future__ import annotations
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .core import ConfigError, CorrespondenceSet, GeometricModel, ModelPool, Pose
from .evalharness.grids import ErrorGrid
from .learnscore import MonotoneDensityParams
from .localopt.lma import OptTrace
from .scoring.functions import ScoreTable
from .synth.scenes import SceneConfig, SyntheticScene
from .validators import validate_model

logger = logging.getLogger(__name__)

DATA_FMT = ".17g"
REPORT_FMT = ".9g"
CORR_COLUMNS = ["u_x", "u_y", "v_x", "v_y"]
TRACE_COLUMNS = ["iter", "objective", "step_norm", "accepted", "objective_before", "objective_after", "robust_objective"]

PathLike = Union[str, Path]


def format_cell(v, fmt: str = DATA_FMT) -> str:
    """Strings pass through, integers and flags print as integers, the rest as floats in fmt."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_, int, np.integer)):
        return str(int(v))
    return format(float(v), fmt)


def _round(obj, fmt: str = REPORT_FMT):
    """Recursively format floats to fmt significant digits for JSON output."""
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if not np.isfinite(v) else float(format(v, fmt))
    if isinstance(obj, (int, np.integer, bool, np.bool_)) or obj is None or isinstance(obj, str):
        return obj.item() if isinstance(obj, np.generic) else obj
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist(), fmt)
    if isinstance(obj, dict):
        return {str(k): _round(v, fmt) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, fmt) for v in obj]
    return obj


def write_json(path: PathLike, payload: dict, fmt: str = REPORT_FMT) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_round(payload, fmt), indent=2, sort_keys=True) + "\n")
    logger.debug("wrote %s", path)
    return path


def read_json(path: PathLike) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing input file: {path}")
    return json.loads(path.read_text())


def _write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence], fmt: str = DATA_FMT) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([format_cell(v, fmt) for v in row] for row in rows)
    logger.debug("wrote %s", path)
    return path


def _read_rows(path: PathLike) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"empty file: {path}")
    return rows[0], rows[1:]


# correspondences

def write_correspondences(path: PathLike, cs: CorrespondenceSet) -> Path:
    if cs.labels is None:
        return _write_rows(path, CORR_COLUMNS, cs.points)
    return _write_rows(path, CORR_COLUMNS + ["label"], (list(p) + [bool(lab)] for p, lab in zip(cs.points, cs.labels)))


def read_correspondences(path: PathLike) -> CorrespondenceSet:
    header, rows = _read_rows(path)
    if header[:4] != CORR_COLUMNS:
        raise ConfigError(f"{path}: expected columns {','.join(CORR_COLUMNS)}")
    pts = np.array([[float(v) for v in r[:4]] for r in rows], dtype=float).reshape(-1, 4)
    labels = None
    if len(header) > 4 and header[4] == "label":
        labels = np.array([r[4] == "1" for r in rows], dtype=bool)
    return CorrespondenceSet(pts, labels)


def _checked(model: GeometricModel, source: str) -> GeometricModel:
    if not validate_model(model):
        raise ConfigError(f"{source}: matrix is not a valid {model.kind.value} model")
    return model


# scenes

def _matrix_list(m: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(m, dtype=float).reshape(-1)]


def write_scene(directory: PathLike, name: str, scene: SyntheticScene) -> list[Path]:
    """Scene JSON plus correspondence CSV named after the scene."""
    directory = Path(directory)
    csv_path = write_correspondences(directory / f"{name}.csv", scene.correspondences)
    payload = {
        "config": scene.config.to_dict(),
        "gt_model": {"kind": scene.gt_model.kind.value, "focal": scene.gt_model.focal,
                     "matrix": _matrix_list(scene.gt_model.matrix)},
        "gt_pose": None if scene.gt_pose is None else {
            "rotation": scene.gt_pose.rotation.tolist(), "translation": scene.gt_pose.translation.tolist()},
        "plane": None if scene.plane is None else np.asarray(scene.plane).tolist(),
        "correspondences": csv_path.name,
    }
    return [write_json(directory / f"{name}.json", payload, DATA_FMT), csv_path]


def read_scene(path: PathLike) -> SyntheticScene:
    path = Path(path)
    d = read_json(path)
    cfg = d["config"]
    config = SceneConfig(cfg["kind"], cfg["n"], cfg["gamma"], cfg["sigma"], tuple(cfg["image_extent"]),
                         cfg["seed"], cfg["focal"], cfg["max_rotation_deg"])
    gm = d["gt_model"]
    model = GeometricModel(gm["kind"], np.array(gm["matrix"]).reshape(3, 3), gm["focal"])
    _checked(model, f"{path} gt_model")
    pose = None if d.get("gt_pose") is None else Pose(d["gt_pose"]["rotation"], d["gt_pose"]["translation"])
    plane = None if d.get("plane") is None else np.array(d["plane"], dtype=float)
    cs = read_correspondences(path.parent / d["correspondences"])
    return SyntheticScene(config, model, cs, pose, plane)


def list_scenes(directory: PathLike) -> list[Path]:
    paths = sorted(Path(directory).glob("scene_*.json"))
    if not paths:
        raise ConfigError(f"no scene files in {directory}")
    return paths


# pools

def write_pool(path: PathLike, pool: ModelPool) -> Path:
    payload = {
        "kind": None if pool.kind is None else pool.kind.value,
        "models": [{"matrix": _matrix_list(m.matrix), "focal": m.focal, "provenance": p.value}
                   for m, p in zip(pool.models, pool.provenance)],
    }
    return write_json(path, payload, DATA_FMT)


def read_pool(path: PathLike) -> ModelPool:
    d = read_json(path)
    kind = d["kind"]
    models = []
    for j, m in enumerate(d["models"]):
        model = GeometricModel(kind, np.array(m["matrix"]).reshape(3, 3), m["focal"])
        models.append(_checked(model, f"{path} model {j}"))
    return ModelPool(tuple(models), tuple(m["provenance"] for m in d["models"]))


# tables and learned params

def write_table(path: PathLike, table: ScoreTable) -> Path:
    return write_json(path, {"tau_max": table.tau_max, "K": table.K, "weights": table.weights.tolist(),
                             "informative": table.informative}, DATA_FMT)


def read_table(path: PathLike) -> ScoreTable:
    d = read_json(path)
    if len(d["weights"]) != d["K"]:
        raise ConfigError(f"{path}: K does not match the number of weights")
    return ScoreTable(d["tau_max"], np.array(d["weights"], dtype=float), bool(d.get("informative", True)))


def write_density_params(path: PathLike, params: MonotoneDensityParams) -> Path:
    return write_json(path, params.to_dict(), DATA_FMT)


def read_density_params(path: PathLike) -> MonotoneDensityParams:
    d = read_json(path)
    return MonotoneDensityParams(np.array(d["eta"]), d["gamma"], d["tau_max"], d["r_max"], tuple(d.get("trace", ())))


# error grids and curves

def write_grid(path: PathLike, grid: ErrorGrid) -> list[Path]:
    """Long-format CSV (instance, threshold, error) plus a JSON header beside it."""
    path = Path(path)
    rows = ([iid, t, grid.errors[i, j]]
            for i, iid in enumerate(grid.instance_ids) for j, t in enumerate(grid.thresholds))
    csv_path = _write_rows(path, ["instance", "threshold", "error"], rows)
    header = write_json(path.with_suffix(".json"), {
        "method": grid.method, "instances": list(grid.instance_ids), "thresholds": grid.thresholds.tolist(),
    }, DATA_FMT)
    return [csv_path, header]


def read_grid(path: PathLike) -> ErrorGrid:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    _, rows = _read_rows(path)
    ids, th = meta["instances"], np.array(meta["thresholds"], dtype=float)
    if len(rows) != len(ids) * th.size:
        raise ConfigError(f"{path}: expected {len(ids) * th.size} rows, found {len(rows)}")
    errors = np.array([float(r[2]) for r in rows], dtype=float).reshape(len(ids), th.size)
    return ErrorGrid(tuple(ids), th, errors, meta["method"])


def write_curve(path: PathLike, thresholds, values, value_name: str = "score") -> Path:
    return _write_rows(path, ["threshold", value_name], zip(thresholds, values), REPORT_FMT)


def write_table_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Generic numeric CSV with report precision."""
    return _write_rows(path, header, rows, REPORT_FMT)


def write_trace(path: PathLike, trace: OptTrace) -> Path:
    """One row per local-optimization iteration."""
    rows = ([s.iteration, s.objective, s.step_norm, s.accepted, s.objective_before, s.objective_after,
             s.robust_objective] for s in trace.iterations)
    return _write_rows(path, TRACE_COLUMNS, rows, REPORT_FMT)
