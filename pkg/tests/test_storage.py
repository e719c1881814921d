from __future__ import annotations

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from scorelab import storage
from scorelab.core import ConfigError
from scorelab.evalharness import ErrorGrid
from scorelab.learnscore import MonotoneDensityParams, learned_score_table
from scorelab.localopt import LmaConfig, irls_lma
from scorelab.scoring.functions import Family, ScoreSpec
from scorelab.synth import PerturbMode, PoolMix, generate_pool, perturb_model


class TestScenes:
    def test_essential_round_trip(self, essential_scene, tmp_path):
        json_path, csv_path = storage.write_scene(tmp_path, "scene_0001", essential_scene)
        assert csv_path.name == "scene_0001.csv"
        back = storage.read_scene(json_path)
        assert back.config == essential_scene.config
        assert_array_equal(back.correspondences.points, essential_scene.correspondences.points)
        assert_array_equal(back.labels, essential_scene.labels)
        assert_array_equal(back.gt_model.matrix, essential_scene.gt_model.matrix)
        assert back.gt_model.focal == essential_scene.gt_model.focal
        assert_allclose(back.gt_pose.rotation, essential_scene.gt_pose.rotation, rtol=0, atol=1e-15)
        assert back.plane is None

    def test_homography_round_trip(self, homography_scene, tmp_path):
        json_path, _ = storage.write_scene(tmp_path, "scene_0000", homography_scene)
        back = storage.read_scene(json_path)
        assert back.gt_pose is None
        assert_array_equal(back.plane, homography_scene.plane)

    def test_rewrite_is_byte_identical(self, homography_scene, tmp_path):
        first = storage.write_scene(tmp_path / "a", "scene_0000", homography_scene)
        second = storage.write_scene(tmp_path / "b", "scene_0000", storage.read_scene(first[0]))
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()

    def test_list_scenes(self, essential_scene, tmp_path):
        with pytest.raises(ConfigError):
            storage.list_scenes(tmp_path)
        storage.write_scene(tmp_path, "scene_0001", essential_scene)
        storage.write_scene(tmp_path, "scene_0000", essential_scene)
        assert [p.name for p in storage.list_scenes(tmp_path)] == ["scene_0000.json", "scene_0001.json"]

    def test_bad_correspondence_header(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("a,b,c,d\n1,2,3,4\n")
        with pytest.raises(ConfigError):
            storage.read_correspondences(path)


class TestPoolsAndTables:
    def test_pool_round_trip(self, essential_scene, tmp_path):
        pool = generate_pool(essential_scene, 12, PoolMix(0.5, 0.4, 0.1), seed=1)
        path = storage.write_pool(tmp_path / "pool_0.json", pool)
        back = storage.read_pool(path)
        assert back.provenance == pool.provenance
        assert_array_equal(back.stacked(), pool.stacked())

    def test_invalid_pool_model_rejected(self, essential_scene, tmp_path):
        path = storage.write_pool(tmp_path / "pool_0.json", generate_pool(essential_scene, 3, seed=2))
        d = json.loads(path.read_text())
        d["models"][1]["matrix"] = np.eye(3).reshape(-1).tolist()
        path.write_text(json.dumps(d))
        with pytest.raises(ConfigError, match="model 1"):
            storage.read_pool(path)

    def test_invalid_scene_model_rejected(self, essential_scene, tmp_path):
        json_path, _ = storage.write_scene(tmp_path, "scene_0001", essential_scene)
        d = json.loads(json_path.read_text())
        d["gt_model"]["matrix"] = [0.0] * 9
        json_path.write_text(json.dumps(d))
        with pytest.raises(ConfigError, match="gt_model"):
            storage.read_scene(json_path)

    def test_table_round_trip(self, rng, tmp_path):
        table = learned_score_table(MonotoneDensityParams(rng.normal(size=16), 0.4, 6.0))
        back = storage.read_table(storage.write_table(tmp_path / "t.json", table))
        assert back.tau_max == table.tau_max and back.informative
        assert_array_equal(back.weights, table.weights)

    def test_table_size_mismatch(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(json.dumps({"tau_max": 2.0, "K": 3, "weights": [1.0, 0.5]}))
        with pytest.raises(ConfigError):
            storage.read_table(path)

    def test_density_params_round_trip(self, rng, tmp_path):
        p = MonotoneDensityParams(rng.normal(size=10), 0.25, 4.0, 50.0, (-3.0, -2.5))
        back = storage.read_density_params(storage.write_density_params(tmp_path / "p.json", p))
        assert_array_equal(back.eta, p.eta)
        assert (back.gamma, back.tau_max, back.r_max, back.trace) == (0.25, 4.0, 50.0, (-3.0, -2.5))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            storage.read_json(tmp_path / "absent.json")


class TestGrids:
    def test_round_trip(self, rng, tmp_path):
        grid = ErrorGrid(("0003", "0007"), np.geomspace(0.1, 10, 5), rng.exponential(2.0, (2, 5)), "magsac")
        csv_path, header = storage.write_grid(tmp_path / "magsac.csv", grid)
        assert header.suffix == ".json"
        assert csv_path.read_text().splitlines()[0] == "instance,threshold,error"
        back = storage.read_grid(csv_path)
        assert back.instance_ids == grid.instance_ids and back.method == "magsac"
        assert_array_equal(back.thresholds, grid.thresholds)
        assert_array_equal(back.errors, grid.errors)
        again, _ = storage.write_grid(tmp_path / "again" / "magsac.csv", back)
        assert again.read_bytes() == csv_path.read_bytes()

    def test_truncated_grid(self, rng, tmp_path):
        grid = ErrorGrid(("a", "b"), [1.0, 2.0], rng.random((2, 2)), "msac")
        csv_path, _ = storage.write_grid(tmp_path / "msac.csv", grid)
        lines = csv_path.read_text().splitlines()
        csv_path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ConfigError):
            storage.read_grid(csv_path)

    def test_report_csv_precision(self, tmp_path):
        path = storage.write_table_csv(tmp_path / "r.csv", ["name", "value"], [["msac", 1.0 / 3.0]])
        assert path.read_text().splitlines()[1] == "msac,0.333333333"


class TestCsv:
    def test_cell_formatting(self):
        assert storage.format_cell("ok") == "ok"
        assert storage.format_cell(True) == "1" and storage.format_cell(np.bool_(False)) == "0"
        assert storage.format_cell(np.int64(42)) == "42"
        assert storage.format_cell(0.1) == "0.10000000000000001"
        assert storage.format_cell(0.1, storage.REPORT_FMT) == "0.1"

    def test_trace_csv(self, essential_scene, tmp_path):
        init = perturb_model(essential_scene.gt_pose, PerturbMode.YAW, 1.0, 0)
        _, trace = irls_lma(ScoreSpec(Family.MSAC, 3.0), init, essential_scene.correspondences,
                            LmaConfig(max_iter=5), focal=essential_scene.config.focal)
        path = storage.write_trace(tmp_path / "lo" / "trace.csv", trace)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(storage.TRACE_COLUMNS)
        assert len(lines) == len(trace.iterations) + 1
        assert all(line.split(",")[3] in {"0", "1"} for line in lines[1:])
