from .scenes import SceneConfig, SyntheticScene, generate_scene, generate_scenes, make_rng
from .solvers import solver_eightpoint, solver_homography_4pt
from .perturb import PerturbMode, perturb_homography, perturb_model
from .pools import PoolMix, generate_pool

__all__ = [
    "SceneConfig",
    "SyntheticScene",
    "generate_scene",
    "generate_scenes",
    "make_rng",
    "solver_eightpoint",
    "solver_homography_4pt",
    "PerturbMode",
    "perturb_model",
    "perturb_homography",
    "PoolMix",
    "generate_pool",
]
