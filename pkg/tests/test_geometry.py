from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import optimize

from scorelab.core import (
    Correspondence,
    CorrespondenceSet,
    DegenerateInputError,
    GeometricModel,
    ModelKind,
    ModelKindError,
    ModelPool,
    Pose,
)
from scorelab.geometry import (
    compose_essential,
    decompose_essential,
    pool_pose_errors,
    pool_residuals,
    pose_error,
    project_to_essential,
    residual_vector,
    rotation_about,
    sampson_residual,
)
from scorelab.geometry.poses import essential_candidates
from scorelab.geometry.sampson import signed_epipolar_residual, whitened_homography_residual
from scorelab.validators import looks_like_essential


def geometric_distance(F: np.ndarray, x: np.ndarray) -> float:
    """Distance from x in R^4 to {y : (y3, y4, 1) F (y1, y2, 1)' = 0}, by constrained minimization."""
    l1 = F @ np.array([x[0], x[1], 1.0])
    l2 = F.T @ np.array([x[2], x[3], 1.0])
    F = F / np.sqrt(l1[0] ** 2 + l1[1] ** 2 + l2[0] ** 2 + l2[1] ** 2)  # unit constraint gradient at x

    def g(y):
        return np.array([y[2], y[3], 1.0]) @ F @ np.array([y[0], y[1], 1.0])

    res = optimize.minimize(lambda y: np.sum((y - x) ** 2), x, jac=lambda y: 2 * (y - x),
                            constraints=[{"type": "eq", "fun": g}], method="SLSQP",
                            options={"ftol": 1e-14, "maxiter": 500})
    return float(np.sqrt(res.fun))


class TestSampson:
    def test_on_manifold_is_zero(self, noiseless_essential):
        _, E, cs = noiseless_essential
        assert np.max(residual_vector(E, cs)) <= 1e-9

    def test_homography_on_manifold(self, rng):
        H = np.array([[1.1, 0.05, 3.0], [-0.02, 0.95, -4.0], [1e-4, 2e-4, 1.0]])
        u = rng.uniform(-300, 300, size=(20, 2))
        x = np.column_stack([u, np.ones(20)]) @ H.T
        v = x[:, :2] / x[:, 2:]
        r = residual_vector(GeometricModel(ModelKind.HOMOGRAPHY, H), CorrespondenceSet(np.column_stack([u, v])))
        assert np.max(r) <= 1e-9

    def test_identity_homography_distance(self):
        r = sampson_residual(GeometricModel(ModelKind.HOMOGRAPHY, np.eye(3)), Correspondence([0, 0], [3, 4]))
        # closest point on v = u is u = v = (1.5, 2)
        assert r == pytest.approx(np.sqrt(12.5), rel=1e-12)

    def test_scale_invariance(self, essential_scene, rng):
        E = essential_scene.gt_model
        r0 = residual_vector(E, essential_scene.correspondences)
        for s in rng.uniform(0.01, 100.0, 10):
            r = residual_vector(GeometricModel(E.kind, s * E.matrix, E.focal), essential_scene.correspondences)
            assert_allclose(r, r0, rtol=1e-10)

    def test_matches_geometric_distance(self, noiseless_essential, rng):
        _, E, cs = noiseless_essential
        F = E.pixel_matrix()
        for p in cs.points[:15]:
            x = p + rng.normal(0.0, 2.0, 4)
            oracle = geometric_distance(F, x)
            r = sampson_residual(E, Correspondence(x[:2], x[2:]))
            assert abs(r - oracle) <= 0.05 * oracle + 1e-9

    def test_empty_and_singleton(self, essential_scene):
        E = essential_scene.gt_model
        assert residual_vector(E, CorrespondenceSet(np.zeros((0, 4)))).shape == (0,)
        one = essential_scene.correspondences.subset(np.array([0]))
        assert residual_vector(E, one)[0] == pytest.approx(sampson_residual(E, one.items[0]))

    def test_inlier_residual_mean(self, essential_scene):
        r = residual_vector(essential_scene.gt_model, essential_scene.correspondences.inliers())
        assert 0.5 <= r.mean() <= 1.1

    def test_degenerate_denominator_is_inf(self):
        r = sampson_residual(GeometricModel(ModelKind.FUNDAMENTAL, np.zeros((3, 3))), Correspondence([1, 2], [3, 4]))
        assert r == np.inf

    def test_pool_rows_match_models(self, essential_scene, random_pose):
        models = [essential_scene.gt_model, compose_essential(random_pose, essential_scene.config.focal)]
        R = pool_residuals(models, essential_scene.correspondences)
        for row, m in zip(R, models):
            assert_allclose(row, residual_vector(m, essential_scene.correspondences))

    def test_signed_and_whitened_forms(self, essential_scene, homography_scene):
        cs = essential_scene.correspondences
        s = signed_epipolar_residual(essential_scene.gt_model.pixel_matrix(), cs.points)
        assert_allclose(np.abs(s), residual_vector(essential_scene.gt_model, cs), rtol=1e-12)
        hs = homography_scene
        e = whitened_homography_residual(hs.gt_model.matrix, hs.correspondences.points).reshape(-1, 2)
        assert_allclose(np.linalg.norm(e, axis=1), residual_vector(hs.gt_model, hs.correspondences), rtol=1e-9)


class TestPoses:
    def test_identity_rotation_essential(self):
        E = compose_essential(Pose([0, 0, 0, 1], [1, 0, 0]))
        s = np.linalg.svd(E.matrix, compute_uv=False)
        assert_allclose(s, [1, 1, 0], atol=1e-15)

    def test_round_trip(self, random_pose):
        back = decompose_essential(compose_essential(random_pose), random_pose)
        assert pose_error(back, random_pose).e <= 1e-6

    def test_scale_invariant_decomposition(self, random_pose):
        E = compose_essential(random_pose)
        a = decompose_essential(E, random_pose)
        b = decompose_essential(GeometricModel(ModelKind.ESSENTIAL, 7.0 * E.matrix), random_pose)
        assert pose_error(a, b).e <= 1e-6

    def test_translation_scale_irrelevant(self, random_pose):
        scaled = Pose(random_pose.rotation, 4.0 * random_pose.translation)
        assert_allclose(compose_essential(scaled).matrix, compose_essential(random_pose).matrix, atol=1e-15)

    def test_perturbed_matches_candidate_oracle(self, random_pose, rng):
        E = project_to_essential(compose_essential(random_pose).matrix + 0.05 * rng.normal(size=(3, 3)))
        oracle = min(max(pose_error(Pose.from_matrix(R, t), random_pose).e_R,
                         pose_error(Pose.from_matrix(R, t), random_pose).e_t)
                     for R, t in essential_candidates(E.matrix))
        assert pose_error(decompose_essential(E, random_pose), random_pose).e == pytest.approx(oracle, abs=1e-9)
        pool = ModelPool((E,), ("perturbation",))
        assert pool_pose_errors(pool, random_pose)[0] == pytest.approx(oracle, abs=1e-6)

    def test_decompose_rejects(self, random_pose):
        with pytest.raises(ModelKindError):
            decompose_essential(GeometricModel(ModelKind.HOMOGRAPHY, np.eye(3)), random_pose)
        with pytest.raises(DegenerateInputError):
            decompose_essential(GeometricModel(ModelKind.ESSENTIAL, np.zeros((3, 3))), random_pose)

    def test_projection(self, random_pose, rng):
        E = compose_essential(random_pose).matrix
        assert_allclose(project_to_essential(E).matrix, E, atol=1e-12)
        assert_allclose(project_to_essential(np.diag([3.0, 2.0, 1.0])).matrix, np.diag([2.5, 2.5, 0.0]), atol=1e-12)
        assert looks_like_essential(project_to_essential(rng.normal(size=(3, 3))).matrix)
        with pytest.raises(DegenerateInputError):
            project_to_essential(np.zeros((3, 3)))


class TestPoseError:
    def test_identical(self, random_pose):
        err = pose_error(random_pose, random_pose)
        assert err.e == pytest.approx(0.0, abs=1e-6)

    def test_rotation_offset(self, random_pose, rng):
        Q = rotation_about(rng.normal(size=3), 10.0)
        est = Pose.from_matrix(Q @ random_pose.R, random_pose.t)
        err = pose_error(est, random_pose)
        assert err.e_R == pytest.approx(10.0, abs=1e-9)
        assert err.e == pytest.approx(10.0, abs=1e-9)

    def test_max_rule(self):
        gt = Pose([0, 0, 0, 1], [1, 0, 0])
        est = Pose.from_matrix(rotation_about([1, 0, 0], 2.0), rotation_about([0, 0, 1], 5.0) @ [1, 0, 0])
        err = pose_error(est, gt)
        assert err.e_R == pytest.approx(2.0, abs=1e-9)
        assert err.e_t == pytest.approx(5.0, abs=1e-9)
        assert err.e == pytest.approx(5.0, abs=1e-9)

    def test_symmetric_in_rotation(self, random_pose, rng):
        other = Pose.from_matrix(rotation_about(rng.normal(size=3), 7.0) @ random_pose.R, rng.normal(size=3))
        assert pose_error(other, random_pose).e_R == pytest.approx(pose_error(random_pose, other).e_R, abs=1e-9)
