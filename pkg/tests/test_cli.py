from __future__ import annotations

import json

import pytest

from scorelab.main import main


def run_cli(out, *args):
    return main(["--seed", "7", "--out", str(out), "--quiet", *args])


def test_synth_is_reproducible(tmp_path, capsys):
    assert run_cli(tmp_path / "a", "synth", "--kind", "essential", "--n", "50", "--count", "2") == 0
    assert run_cli(tmp_path / "b", "synth", "--kind", "essential", "--n", "50", "--count", "2") == 0
    files = sorted(p.name for p in (tmp_path / "a" / "scenes").iterdir())
    assert files == ["scene_0000.csv", "scene_0000.json", "scene_0001.csv", "scene_0001.json"]
    for name in files:
        assert (tmp_path / "a" / "scenes" / name).read_bytes() == (tmp_path / "b" / "scenes" / name).read_bytes()
    assert "seed=7" in capsys.readouterr().out


def test_missing_kind_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli(tmp_path, "synth")
    assert exc.value.code == 2


def test_config_file_supplies_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "homography", "n": 40, "count": 1}))
    assert run_cli(tmp_path / "out", "--config", str(cfg), "synth") == 0
    scene = json.loads((tmp_path / "out" / "scenes" / "scene_0000.json").read_text())
    assert scene["config"]["kind"] == "homography" and scene["config"]["n"] == 40


def test_random_seed_is_printed(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "-q", "magsac-fit", "--nu", "4"]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("seed=") and first[5:].isdigit()
    assert (tmp_path / "magsac_fit.json").is_file()


def test_missing_inputs_fail(tmp_path, capsys):
    assert run_cli(tmp_path, "pool") == 1
    assert "no scene files" in capsys.readouterr().err
    assert run_cli(tmp_path, "--error-json", "report") == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["source"] == "ConfigError"
    assert "missing inputs" in err["notes"]


def test_pipeline(tmp_path):
    out = tmp_path / "run"
    assert run_cli(out, "synth", "--kind", "essential", "--n", "150", "--gamma", "0.7", "--count", "3") == 0
    assert run_cli(out, "pool", "--m", "40", "--mix", "0.8", "0.2", "0") == 0
    assert sorted(p.name for p in (out / "pools").iterdir()) == ["pool_0000.json", "pool_0001.json", "pool_0002.json"]

    assert run_cli(out, "score", "--family", "msac", "--tau", "2") == 0
    assert len((out / "scores_msac.csv").read_text().splitlines()) == 3 * 40 + 1
    best = json.loads((out / "best_msac.json").read_text())["best"]
    assert set(best) == {"0000", "0001", "0002"}

    assert run_cli(out, "lo", "--family", "msac", "--tau", "2", "--max-iter", "5") == 0
    assert len((out / "lo" / "summary.csv").read_text().splitlines()) == 4

    assert run_cli(out, "learn", "--bins", "50", "--tau-max", "10") == 0
    assert json.loads((out / "learned" / "table.json").read_text())["K"] == 50

    assert run_cli(out, "sweep", "--methods", "msac", "oracle", "--thresholds", "0.5", "5", "4", "--bins", "100") == 0
    chosen = json.loads((out / "chosen.json").read_text())["methods"]
    assert chosen["oracle"]["threshold"] is None
    assert chosen["oracle"]["median"] <= chosen["msac"]["median"]

    assert run_cli(out, "sweep", "--family", "learned", "--table", str(out / "learned" / "table.json"),
                   "--methods", "learned", "--thresholds", "0.5", "5", "4") == 0
    assert (out / "grids" / "learned.csv").is_file()

    assert run_cli(out, "sensitivity", "--grid", str(out / "grids" / "msac.csv"), "--trials", "10") == 0
    assert json.loads((out / "sensitivity_msac.json").read_text())["method"] == "msac"

    assert run_cli(out, "selectivity", "--tau", "3", "--theta", "2", "1", "--modes", "yaw") == 0
    assert (out / "curves" / "selectivity_msac.csv").read_text().splitlines()[0] == "theta,yaw"

    assert run_cli(out, "consistency", "--taus", "1", "3") == 0
    assert (out / "consistency.json").is_file()

    assert run_cli(out, "report", "--n-boot", "50") == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["methods"]) == {"msac", "oracle", "learned"}
    assert "msac" in report["sensitivity"]
    assert report["magsac_fit"][0]["nu"] == 4


def test_oracle_report_on_ground_truth_pools(tmp_path):
    out = tmp_path / "gt"
    assert run_cli(out, "synth", "--kind", "essential", "--n", "60", "--count", "2") == 0
    assert run_cli(out, "pool", "--m", "3", "--mix", "0", "0", "1") == 0
    assert run_cli(out, "sweep", "--methods", "oracle", "msac", "--thresholds", "1", "4", "3", "--bins", "50") == 0
    curve = (out / "curves" / "oracle.csv").read_text().splitlines()[1:]
    assert len({line.split(",")[1] for line in curve}) == 1
    oracle_meta = json.loads((out / "grids" / "oracle.json").read_text())
    msac_meta = json.loads((out / "grids" / "msac.json").read_text())
    assert oracle_meta["instances"] == msac_meta["instances"] == ["0000", "0001"]
    assert run_cli(out, "report", "--n-boot", "20") == 0
    report = json.loads((out / "report.json").read_text())
    assert report["methods"]["oracle"]["median"] == pytest.approx(0.0, abs=1e-5)
    assert set(report["methods"]["oracle"]) == {"threshold", "median", "maa", "median_ci", "instances"}
