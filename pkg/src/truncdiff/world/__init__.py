from .scenes import SCENE_KINDS, Obstacle, Scene, gen_corpus, gen_scene, read_scenes, write_scenes
from .scoring import PdmScore, collision_free, comfort, drivable, pdm_score, progress, ttc_score
from .tokens import D_CTX, N_CTX_MAX, scene_tokens

__all__ = [
    "SCENE_KINDS",
    "Obstacle",
    "Scene",
    "gen_corpus",
    "gen_scene",
    "read_scenes",
    "write_scenes",
    "PdmScore",
    "collision_free",
    "comfort",
    "drivable",
    "pdm_score",
    "progress",
    "ttc_score",
    "D_CTX",
    "N_CTX_MAX",
    "scene_tokens",
]
