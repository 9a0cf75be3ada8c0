"""Procedural driving scenes and their JSON-lines serialization.

Three scene kinds, all in the ego frame (ego at the origin heading +x):

* ``fork``: straight approach that splits into the straight branch plus one
  or both lateral branches; one ground-truth mode per branch.
* ``obstacle``: straight corridor with 1-3 moving obstacles; ground truth is
  passing left and/or passing right, whichever is collision-free.
* ``merge``: curved corridor; keep speed, optionally also a yielding
  (decelerating) mode.

Waypoint ``i`` (1-based) sits at time ``i * dt``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import CorpusFormatError, UnknownKindError
from ..rng import make_rng
from .geometry import arc_lengths, points_at

SCENE_KINDS = ("fork", "obstacle", "merge")
_KIND_IDS = {k: i for i, k in enumerate(SCENE_KINDS)}

HORIZON = 8
DT = 0.5
ROUTE_MARGIN = 1.25
FORK_OFFSET = 3.5
PASS_OFFSET = 3.0


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float]


@dataclass
class Scene:
    kind: str
    seed: int
    speed: float
    heading: float
    obstacles: list[Obstacle]
    route: np.ndarray  # primary route polyline (P, 2)
    half_width: float
    gt_modes: np.ndarray  # (n_modes, H, 2)
    dt: float = DT
    branches: list[np.ndarray] = field(default_factory=list)  # extra corridor centerlines
    split: str = ""

    @property
    def horizon(self) -> int:
        return self.gt_modes.shape[1]

    @property
    def corridors(self) -> list[np.ndarray]:
        return [self.route, *self.branches]

    def to_json(self) -> str:
        d = {
            "kind": self.kind,
            "seed": self.seed,
            "split": self.split,
            "ego": {"speed": self.speed, "heading": self.heading},
            "obstacles": [
                {"center": list(o.center), "radius": o.radius, "velocity": list(o.velocity)}
                for o in self.obstacles
            ],
            "route": self.route.tolist(),
            "branches": [b.tolist() for b in self.branches],
            "half_width": self.half_width,
            "gt_modes": self.gt_modes.tolist(),
            "dt": self.dt,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Scene":
        d = json.loads(line)
        return cls(
            kind=d["kind"],
            seed=int(d["seed"]),
            speed=float(d["ego"]["speed"]),
            heading=float(d["ego"]["heading"]),
            obstacles=[
                Obstacle(tuple(o["center"]), float(o["radius"]), tuple(o["velocity"])) for o in d["obstacles"]
            ],
            route=np.asarray(d["route"], dtype=np.float64),
            half_width=float(d["half_width"]),
            gt_modes=np.asarray(d["gt_modes"], dtype=np.float64),
            dt=float(d["dt"]),
            branches=[np.asarray(b, dtype=np.float64) for b in d.get("branches", [])],
            split=d.get("split", ""),
        )


def _lateral_shift(x: np.ndarray, offset: float, start: float, length: float) -> np.ndarray:
    u = np.clip((x - start) / length, 0.0, 1.0)
    return offset * (1.0 - np.cos(np.pi * u)) / 2.0


def _shifted_line(length: float, offset: float, start: float, shift_len: float, n: int = 41) -> np.ndarray:
    x = np.linspace(0.0, length, n)
    return np.stack([x, _lateral_shift(x, offset, start, shift_len)], axis=1)


def _drive(poly: np.ndarray, s: np.ndarray) -> np.ndarray:
    return points_at(poly, s)


def _times(H: int, dt: float) -> np.ndarray:
    return dt * np.arange(1, H + 1)


def _gen_fork(rng, speed, H, dt):
    travel = speed * H * dt
    length = ROUTE_MARGIN * travel
    start, shift = 0.2 * travel, 0.6 * travel
    sides = [[FORK_OFFSET], [-FORK_OFFSET], [FORK_OFFSET, -FORK_OFFSET]][rng.integers(3)]
    polys = [_shifted_line(length, 0.0, start, shift)] + [_shifted_line(length, o, start, shift) for o in sides]
    s = speed * _times(H, dt)
    modes = np.stack([_drive(p, s) for p in polys])
    return [], polys[0], polys[1:], 2.0, modes


def _gen_obstacle(rng, speed, H, dt, collision_free):
    travel = speed * H * dt
    length = ROUTE_MARGIN * travel
    route = _shifted_line(length, 0.0, 0.0, 1.0, n=2)
    s = speed * _times(H, dt)
    passes = [_drive(_shifted_line(length, o, 0.05 * travel, 0.5 * travel), s) for o in (PASS_OFFSET, -PASS_OFFSET)]
    straight = _drive(route, s)
    while True:
        n_obs = int(rng.integers(1, 4))
        obstacles = []
        for i in range(n_obs):
            if i == 0:
                cx, cy = rng.uniform(0.45, 0.8) * travel, rng.uniform(-0.5, 0.5)
            else:
                cx, cy = rng.uniform(0.3, 1.0) * travel, rng.uniform(-3.5, 3.5)
            vel = (rng.uniform(-0.1, 0.1) * speed, rng.uniform(-0.3, 0.3))
            obstacles.append(Obstacle((float(cx), float(cy)), float(rng.uniform(0.5, 1.0)), (float(vel[0]), float(vel[1]))))
        probe = Scene("obstacle", 0, speed, 0.0, obstacles, route, 4.0, straight[None], dt)
        ok = [m for m in passes if collision_free(m, probe)]
        if ok and not collision_free(straight, probe):
            return obstacles, route, [], 4.0, np.stack(ok)


def _gen_merge(rng, speed, H, dt):
    travel = speed * H * dt
    length = ROUTE_MARGIN * travel
    radius = rng.uniform(25.0, 80.0) * (1.0 if rng.random() < 0.5 else -1.0)
    theta = np.linspace(0.0, length / abs(radius), 41)
    route = np.stack([abs(radius) * np.sin(theta), radius * (1.0 - np.cos(theta))], axis=1)
    t = _times(H, dt)
    modes = [_drive(route, speed * t)]
    if rng.random() < 0.5:
        decel = 0.4 * speed / (H * dt)
        modes.append(_drive(route, speed * t - 0.5 * decel * t**2))
    return [], route, [], 2.0, np.stack(modes)


def gen_scene(kind: str, seed: int, horizon: int = HORIZON, dt: float = DT) -> Scene:
    if kind not in _KIND_IDS:
        raise UnknownKindError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    from .scoring import collision_free, drivable

    rng = make_rng(seed, 7919, _KIND_IDS[kind])
    while True:
        speed = float(rng.uniform(3.0, 12.0))
        if kind == "fork":
            obstacles, route, branches, w, modes = _gen_fork(rng, speed, horizon, dt)
        elif kind == "obstacle":
            obstacles, route, branches, w, modes = _gen_obstacle(rng, speed, horizon, dt, collision_free)
        else:
            obstacles, route, branches, w, modes = _gen_merge(rng, speed, horizon, dt)
        scene = Scene(kind, int(seed), speed, 0.0, obstacles, route, w, modes, dt, branches)
        if all(collision_free(m, scene) and drivable(m, scene) for m in modes):
            return scene


def gen_corpus(n_train: int, n_eval: int, seed: int, horizon: int = HORIZON, dt: float = DT) -> list[Scene]:
    """Train then eval scenes, kinds cycling fork/obstacle/merge."""
    scenes = []
    rng = make_rng(seed, 101)
    for i in range(n_train + n_eval):
        kind = SCENE_KINDS[i % len(SCENE_KINDS)]
        scene = gen_scene(kind, int(rng.integers(0, 2**62)), horizon, dt)
        scene.split = "train" if i < n_train else "eval"
        scenes.append(scene)
    return scenes


def write_scenes(path, scenes) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in scenes:
            f.write(s.to_json() + "\n")


def read_scenes(path) -> list[Scene]:
    scenes = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                scenes.append(Scene.from_json(line))
            except (ValueError, KeyError, TypeError, IndexError) as e:
                raise CorpusFormatError(f"{path}:{lineno}: malformed scene ({type(e).__name__}: {e})") from None
    return scenes


__all__ = [
    "Obstacle",
    "Scene",
    "SCENE_KINDS",
    "arc_lengths",
    "gen_scene",
    "gen_corpus",
    "read_scenes",
    "write_scenes",
]
