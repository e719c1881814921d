from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from scorelab.core import ConfigError, ModelKindError
from scorelab.evalharness import (
    ORACLE,
    ErrorGrid,
    ParityResult,
    bootstrap_median_ci,
    consistency_experiment,
    fit_magsac_to_gau,
    large_validation,
    lower_median,
    median_and_maa,
    parity_experiment,
    precompute_error_grid,
    selectivity_experiment,
    small_validation_sensitivity,
)
from scorelab.evalharness.grids import direct_selection
from scorelab.geometry import pool_pose_errors, pool_residuals
from scorelab.scoring.functions import Family, ScoreSpec, rho
from scorelab.synth import PerturbMode, PoolMix, SceneConfig, generate_pool, generate_scenes


@pytest.fixture(scope="module")
def instances():
    scenes = generate_scenes(SceneConfig(n=200, gamma=0.6, sigma=1.0), 6, seed=3)
    pools = [generate_pool(s, 80, seed=i) for i, s in enumerate(scenes)]
    return scenes, pools


class TestStatistics:
    def test_lower_median(self):
        assert lower_median([4.0, 1.0, 3.0, 2.0]) == 2.0
        assert lower_median([3.0, 1.0, 2.0]) == 2.0
        assert_array_equal(lower_median(np.array([[1.0, 9.0], [5.0, 2.0]]), axis=0), [1.0, 2.0])
        with pytest.raises(ConfigError):
            lower_median([])

    def test_median_and_maa(self):
        med, maa = median_and_maa([0.0, 5.0, 10.0, 20.0])
        assert med == 5.0
        assert maa == pytest.approx(0.375)

    def test_bootstrap(self, rng):
        assert bootstrap_median_ci(np.full(30, 2.5), n_boot=200) == (2.5, 2.5)
        e = rng.exponential(2.0, 200)
        lo, hi = bootstrap_median_ci(e, n_boot=500, seed=1)
        assert lo <= lower_median(e) <= hi
        assert bootstrap_median_ci(e, n_boot=500, seed=1) == (lo, hi)


class TestErrorGrid:
    def test_rejects_negative(self):
        with pytest.raises(ConfigError):
            ErrorGrid(("a",), [1.0], [[-1.0]], "msac")

    def test_subset(self):
        g = ErrorGrid(("a", "b", "c"), [1.0, 2.0], np.arange(6.0).reshape(3, 2), "msac")
        s = g.subset([2, 0])
        assert s.instance_ids == ("c", "a")
        assert_array_equal(s.errors, [[4.0, 5.0], [0.0, 1.0]])

    def test_large_validation_ties_pick_lowest(self):
        g = ErrorGrid(("a", "b"), [0.5, 1.0, 2.0], [[3.0, 1.0, 1.0], [3.0, 1.0, 1.0]], "msac")
        tau, curve = large_validation(g)
        assert tau == 1.0
        assert_array_equal(curve, [3.0, 1.0, 1.0])

    def test_oracle_dominates(self, instances):
        scenes, pools = instances
        th = np.geomspace(0.5, 5.0, 6)
        oracle = precompute_error_grid(scenes, pools, ORACLE, th)
        for fam in (Family.RANSAC, Family.MSAC, Family.MAGSAC):
            grid = precompute_error_grid(scenes, pools, ScoreSpec(fam, 1.0), th, K=200, threads=2)
            assert grid.shape == (6, 6) and grid.method == fam.value
            assert np.all(oracle.errors <= grid.errors)
        assert oracle.method == ORACLE
        assert np.all(oracle.errors == oracle.errors[:, :1])

    def test_ransac_on_bin_edge_matches_direct(self, instances):
        scenes, pools = instances
        grid = precompute_error_grid(scenes, pools, ScoreSpec(Family.RANSAC, 1.0), [2.0], tau_max=20.0, K=500)
        for i, (scene, pool) in enumerate(zip(scenes, pools)):
            best = direct_selection(scene, pool, ScoreSpec(Family.RANSAC, 2.0))
            assert grid.errors[i, 0] == pool_pose_errors(pool, scene.gt_pose)[best]

    def test_histogram_selection_near_direct_optimum(self, instances):
        scenes, pools = instances
        spec = ScoreSpec(Family.MSAC, 2.0)
        tau_max, K = 20.0, 500
        grid = precompute_error_grid(scenes, pools, spec, [2.0], tau_max=tau_max, K=K)
        for i, (scene, pool) in enumerate(zip(scenes, pools)):
            direct = rho(spec, pool_residuals(pool, scene.correspondences)).sum(axis=1)
            errs = pool_pose_errors(pool, scene.gt_pose)
            chosen = np.nonzero(errs == grid.errors[i, 0])[0]
            # per-residual discretization error is at most (2 / tau) * delta / 2
            slack = len(scene.correspondences) * (2.0 / spec.tau) * (tau_max / K)
            assert direct[chosen].max() >= direct.max() - slack

    def test_mismatched_inputs(self, instances, homography_scene):
        scenes, pools = instances
        with pytest.raises(ConfigError):
            precompute_error_grid(scenes[:2], pools[:3], ORACLE, [1.0])
        with pytest.raises(ConfigError):
            precompute_error_grid(scenes, pools, "best", [1.0])
        with pytest.raises(ModelKindError):
            precompute_error_grid([homography_scene], [generate_pool(homography_scene, 5)], ORACLE, [1.0])


class TestSensitivity:
    def test_all_instances_is_deterministic(self, rng):
        errors = rng.exponential(3.0, size=(12, 7))
        val = ErrorGrid(tuple(map(str, range(12))), np.linspace(1, 7, 7), errors, "msac")
        test = ErrorGrid(tuple(map(str, range(5))), np.linspace(1, 7, 7), rng.exponential(3.0, (5, 7)), "msac")
        rep = small_validation_sensitivity(val, test, [12, 3], trials=50, seed=2)
        tau_idx = int(np.argmin(lower_median(errors, axis=0)))
        assert rep.error_std[0] <= 1e-12
        assert rep.expected_error[0] == pytest.approx(lower_median(test.errors, axis=0)[tau_idx])
        assert rep.n_values == (12, 3)

    def test_invalid_n(self, rng):
        g = ErrorGrid(("a", "b"), [1.0, 2.0], rng.random((2, 2)), "msac")
        with pytest.raises(ConfigError):
            small_validation_sensitivity(g, g, [3], trials=5, seed=0)
        other = ErrorGrid(("a",), [1.0, 3.0], rng.random((1, 2)), "msac")
        with pytest.raises(ConfigError):
            small_validation_sensitivity(g, other, [1], trials=5, seed=0)


class TestMagsacFit:
    def test_nu4(self):
        fit = fit_magsac_to_gau(4)
        assert fit.kappa == pytest.approx(3.644, abs=1e-3)
        assert fit.tau == pytest.approx(1.0, abs=0.1)
        assert fit.sigma == pytest.approx(0.96, abs=0.1)
        assert fit.sup_err <= 0.05

    def test_tau_grows_with_nu(self):
        fits = [fit_magsac_to_gau(nu) for nu in (4, 6, 8)]
        assert [round(f.kappa, 3) for f in fits] == [3.644, 4.100, 4.482]
        assert fits[0].tau < fits[1].tau < fits[2].tau
        assert fits[1].tau == pytest.approx(2.0, abs=0.15) and fits[2].tau == pytest.approx(2.51, abs=0.15)
        assert all(f.rms_weight < 0.05 for f in fits)

    def test_rejects_small_nu(self):
        with pytest.raises(ConfigError):
            fit_magsac_to_gau(1)


class TestExperiments:
    def test_selectivity(self, instances):
        scenes, _ = instances
        res = selectivity_experiment(scenes, ScoreSpec(Family.MSAC, 3.0),
                                     modes=[PerturbMode.PITCH, PerturbMode.RANDOM_TRANS_ROT],
                                     theta_grid=[0.0, 1.0, 5.0], seed=1)
        assert res.kept == len(scenes) and res.excluded == 0
        for curve in res.curves.values():
            assert curve[0] == pytest.approx(1.0, abs=1e-12)
            assert curve[2] < curve[0]
        assert set(res.to_dict()["curves"]) == {"pitch", "random_trans_rot"}

    def test_selectivity_filter(self, instances):
        scenes, _ = instances
        with pytest.raises(ConfigError):
            selectivity_experiment(scenes, ScoreSpec(Family.MSAC, 3.0), theta_grid=[0.0], min_gt_score=1e9)

    def test_selectivity_needs_pose(self, homography_scene):
        with pytest.raises(ModelKindError):
            selectivity_experiment([homography_scene], ScoreSpec(Family.MSAC, 3.0))

    def test_consistency(self, instances):
        scenes, _ = instances
        taus = [0.5, 1.0, 3.0]
        res = consistency_experiment(scenes, taus, seed=4)
        m = res.mean_inliers
        assert m.shape == (5, 3)
        assert np.all(np.diff(m, axis=1) >= 0)
        assert np.all(m[0] >= m[1:])
        assert m[0, 1] > m[1, 1]

    def test_parity_verdict(self):
        th = np.array([1.0, 2.0, 4.0])
        flat = {k: np.zeros(3) for k in ("ransac", "msac", "gau_marginal", "magsac", ORACLE)}
        taus = {"ransac": 1.0, "msac": 2.0, "gau_marginal": 2.0, "magsac": 4.0, ORACLE: None}
        res = ParityResult({"ransac": 2.2, "msac": 2.0, "gau_marginal": 2.02, "magsac": 2.01, ORACLE: 1.0},
                           taus, flat, th)
        assert res.spread() == pytest.approx(0.01)
        assert res.ransac_gap() == pytest.approx(2.2 / 2.02 - 1.0)
        assert res.parity_holds()
        assert res.edge_optima() == ["magsac"]
        worse = ParityResult(res.best_median | {"ransac": 2.05}, taus, flat, th)
        assert not worse.parity_holds()
        assert worse.to_dict()["parity_holds"] is False

    def test_parity_without_ransac(self):
        res = ParityResult({"msac": 2.0, ORACLE: 1.0}, {"msac": 1.0, ORACLE: None},
                           {"msac": np.zeros(1), ORACLE: np.zeros(1)}, np.array([1.0]))
        assert res.ransac_gap() is None and not res.parity_holds()

    @pytest.mark.slow
    def test_parity(self):
        base = SceneConfig(n=300, gamma=0.5, sigma=1.0)
        res = parity_experiment(base, n_scenes=12, pool_size=200, seed=5, thresholds=np.geomspace(0.5, 5.0, 8), K=200)
        assert set(res.best_median) == {"ransac", "msac", "gau_marginal", "magsac", ORACLE}
        assert res.best_threshold[ORACLE] is None
        for name, med in res.best_median.items():
            assert res.best_median[ORACLE] <= med
            assert med == pytest.approx(res.curves[name].min())


@pytest.mark.slow
class TestAtScale:
    @pytest.fixture(scope="class")
    def essential_scenes(self):
        return generate_scenes(SceneConfig(n=500, gamma=0.5, sigma=1.0), 100, seed=17)

    def test_consistency_strictly_decreasing(self, essential_scenes):
        res = consistency_experiment(essential_scenes, [0.5, 1.0, 2.0, 5.0], seed=2)
        assert np.all(np.diff(res.mean_inliers, axis=0) < 0)

    def test_selectivity_rotation_decays_faster(self, essential_scenes):
        thetas = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0]
        res = selectivity_experiment(essential_scenes, ScoreSpec(Family.MSAC, 1.0),
                                     modes=[PerturbMode.RANDOM_ROT, PerturbMode.RANDOM_TRANS_ROT],
                                     theta_grid=thetas, seed=3)
        for mode, curve in res.curves.items():
            band = 3.0 * res.stds[mode] / np.sqrt(res.kept)
            assert curve[0] == pytest.approx(1.0, abs=1e-12)
            assert np.all(np.diff(curve) <= band[1:])
        rot, trans = res.curves["random_rot"], res.curves["random_trans_rot"]
        assert np.all(rot[1:] <= trans[1:] + 0.02)

    def test_magsac_fit_matches_gau(self):
        expected = {4: (1.0, 0.96), 6: (2.0, 1.0), 8: (2.51, 1.06)}
        for nu, (tau, sigma) in expected.items():
            fit = fit_magsac_to_gau(nu)
            assert fit.tau == pytest.approx(tau, abs=0.05)
            assert fit.sigma == pytest.approx(sigma, abs=0.05)
        assert fit_magsac_to_gau(4).sup_err <= 0.02

    def test_parity_at_full_scale(self):
        res = parity_experiment(SceneConfig(n=500, gamma=0.5, sigma=1.0), n_scenes=200, pool_size=1000, seed=11)
        assert res.spread() is not None and res.ransac_gap() is not None
        for name, med in res.best_median.items():
            assert res.best_median[ORACLE] <= med
        assert res.to_dict()["parity_holds"] == res.parity_holds()

    def test_ransac_worse_on_perturbed_pools(self):
        res = parity_experiment(SceneConfig(n=500, gamma=0.5, sigma=1.0), n_scenes=100, pool_size=500, seed=13,
                                mix=PoolMix(minimal=0.0, perturbation=1.0))
        assert res.ransac_gap() >= 0.05

    def test_ransac_expected_error_not_lower_at_small_n(self):
        mix = PoolMix(minimal=0.0, perturbation=1.0)
        scenes = generate_scenes(SceneConfig(n=500, gamma=0.5, sigma=1.0), 80, seed=19)
        pools = [generate_pool(s, 300, mix, seed=i) for i, s in enumerate(scenes)]
        th = np.geomspace(0.1, 40.0, 60)
        expected = {}
        for fam in (Family.RANSAC, Family.GAU_MARGINAL):
            grid = precompute_error_grid(scenes, pools, ScoreSpec(fam, 1.0), th)
            rep = small_validation_sensitivity(grid.subset(range(40)), grid.subset(range(40, 80)), [4],
                                               trials=1000, seed=23)
            expected[fam] = rep.expected_error[0]
        assert expected[Family.RANSAC] >= expected[Family.GAU_MARGINAL]
