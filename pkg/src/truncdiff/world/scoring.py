"""Mini PDM-style scorer: gated no-collision and drivable-area checks times a
weighted blend of time-to-collision, comfort and ego progress.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import arc_lengths, project
from .scenes import Scene

EGO_RADIUS = 1.0
TTC_HORIZON = 2.0
TTC_STEP = 0.1
MAX_ACCEL = 4.0
MAX_JERK = 8.0
W_TTC, W_COMFORT, W_PROGRESS = 5.0, 2.0, 5.0


@dataclass(frozen=True)
class PdmScore:
    nc: float
    dac: float
    ttc: float
    comfort: float
    progress: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def _waypoint_times(traj: np.ndarray, scene: Scene) -> np.ndarray:
    return scene.dt * np.arange(1, len(traj) + 1)


def _obstacle_arrays(scene: Scene):
    c = np.array([o.center for o in scene.obstacles], dtype=np.float64).reshape(-1, 2)
    v = np.array([o.velocity for o in scene.obstacles], dtype=np.float64).reshape(-1, 2)
    r = np.array([o.radius for o in scene.obstacles], dtype=np.float64)
    return c, v, r


def collision_free(traj, scene: Scene) -> bool:
    if not scene.obstacles:
        return True
    traj = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    c, v, r = _obstacle_arrays(scene)
    t = _waypoint_times(traj, scene)
    centers = c[None] + t[:, None, None] * v[None]  # (H, n_obs, 2)
    d = np.linalg.norm(traj[:, None, :] - centers, axis=2)
    return bool((d > r[None] + EGO_RADIUS).all())


def drivable(traj, scene: Scene) -> bool:
    traj = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    d = np.min([project(traj, poly)[0] for poly in scene.corridors], axis=0)
    return bool((d <= scene.half_width).all())


def progress(traj, scene: Scene) -> float:
    traj = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    _, s = project(traj[-1:], scene.route)
    return float(np.clip(s[0] / arc_lengths(scene.route)[-1], 0.0, 1.0))


def comfort(traj, scene: Scene) -> float:
    p = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    dt = scene.dt
    acc = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dt**2
    jerk = np.diff(acc, axis=0) / dt
    if len(acc) and np.linalg.norm(acc, axis=1).max() > MAX_ACCEL:
        return 0.0
    if len(jerk) and np.linalg.norm(jerk, axis=1).max() > MAX_JERK:
        return 0.0
    return 1.0


def ttc_score(traj, scene: Scene) -> float:
    """1 unless extrapolating the ego's current velocity for 2 s hits an obstacle."""
    if not scene.obstacles:
        return 1.0
    traj = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    if not collision_free(traj, scene):
        return 0.0
    c, v, r = _obstacle_arrays(scene)
    t = _waypoint_times(traj, scene)
    prev = np.vstack([np.zeros((1, 2)), traj[:-1]])  # ego starts at the origin
    vel = (traj - prev) / scene.dt
    taus = np.arange(0, int(round(TTC_HORIZON / TTC_STEP)) + 1) * TTC_STEP
    ego = traj[:, None, :] + taus[None, :, None] * vel[:, None, :]  # (H, S, 2)
    obs_t = t[:, None] + taus[None, :]
    obs = c[None, None] + obs_t[..., None, None] * v[None, None]  # (H, S, n_obs, 2)
    d = np.linalg.norm(ego[:, :, None, :] - obs, axis=3)
    return 0.0 if (d <= r + EGO_RADIUS).any() else 1.0


def combine(nc: float, dac: float, ttc: float, comf: float, prog: float) -> PdmScore:
    blend = (W_TTC * ttc + W_COMFORT * comf + W_PROGRESS * prog) / (W_TTC + W_COMFORT + W_PROGRESS)
    return PdmScore(nc, dac, ttc, comf, prog, nc * dac * blend)


def pdm_score(traj, scene: Scene) -> PdmScore:
    return combine(
        float(collision_free(traj, scene)),
        float(drivable(traj, scene)),
        ttc_score(traj, scene),
        comfort(traj, scene),
        progress(traj, scene),
    )
