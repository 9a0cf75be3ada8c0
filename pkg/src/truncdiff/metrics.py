"""Candidate-set metrics and the truncated-vs-vanilla evaluation suite."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import EmptySceneSetError
from .policy import Model, PlanResult, run_planner, select
from .rng import make_rng
from .world import Scene, pdm_score


def _ade_matrix(candidates, gt_modes) -> np.ndarray:
    c = np.asarray(candidates, dtype=np.float64)
    g = np.asarray(gt_modes, dtype=np.float64)
    return np.linalg.norm(c[:, None] - g[None], axis=3).mean(axis=2)


def min_ade(candidates, gt_modes) -> float:
    return float(_ade_matrix(candidates, gt_modes).min())


def mode_coverage(candidates, gt_modes, threshold: float = 0.5) -> float:
    best = _ade_matrix(candidates, gt_modes).min(axis=0)
    return float((best < threshold).mean())


def diversity(candidates, full_path: bool = False) -> float:
    """Mean pairwise final-waypoint distance (or mean pairwise ADE with ``full_path``)."""
    c = np.asarray(candidates, dtype=np.float64)
    if len(c) < 2:
        return 0.0
    if full_path:
        dists = [np.linalg.norm(c[i] - c[j], axis=1).mean() for i, j in combinations(range(len(c)), 2)]
    else:
        dists = [np.linalg.norm(c[i, -1] - c[j, -1]) for i, j in combinations(range(len(c)), 2)]
    return float(np.mean(dists))


@dataclass
class SceneMetrics:
    kind: str
    pdms: float
    min_ade: float
    mode_coverage: float
    diversity: float
    wall_time: float


@dataclass
class MethodReport:
    name: str
    n_denoise_steps: int
    pdms: float
    min_ade: float
    mode_coverage: float
    diversity: float
    wall_time_per_scene: float
    per_kind: dict = field(default_factory=dict)
    per_scene: list = field(default_factory=list)


@dataclass
class EvalReport:
    n_scenes: int
    seed: int
    methods: list[MethodReport]

    def method(self, name: str) -> MethodReport:
        return next(m for m in self.methods if m.name == name)

    def to_dict(self, with_timing: bool = True, with_scenes: bool = False) -> dict:
        out = {"n_scenes": self.n_scenes, "seed": self.seed, "methods": []}
        for m in self.methods:
            d = asdict(m)
            if not with_scenes:
                d.pop("per_scene")
            else:
                d["per_scene"] = [asdict(s) for s in m.per_scene]
            if not with_timing:
                d.pop("wall_time_per_scene")
                for s in d.get("per_scene", []):
                    s.pop("wall_time")
            out["methods"].append(d)
        return out

    def table(self) -> str:
        cols = ["method", "steps", "mini-PDMS", "minADE[m]", "coverage", "diversity[m]", "time/scene[ms]"]
        rows = [
            [m.name, str(m.n_denoise_steps), f"{m.pdms:.4f}", f"{m.min_ade:.4f}", f"{m.mode_coverage:.4f}",
             f"{m.diversity:.4f}", f"{1e3 * m.wall_time_per_scene:.2f}"]
            for m in self.methods
        ]
        widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
        return "\n".join(lines)


def scene_metrics(result: PlanResult, scene: Scene, wall_time: float, threshold: float, full_path: bool) -> SceneMetrics:
    return SceneMetrics(
        kind=scene.kind,
        pdms=pdm_score(select(result), scene).total,
        min_ade=min_ade(result.candidates, scene.gt_modes),
        mode_coverage=mode_coverage(result.candidates, scene.gt_modes, threshold),
        diversity=diversity(result.candidates, full_path),
        wall_time=wall_time,
    )


def _aggregate(name: str, steps: int, per_scene: list[SceneMetrics]) -> MethodReport:
    def mean(attr, rows):
        return float(np.mean([getattr(r, attr) for r in rows]))

    per_kind = {}
    for kind in sorted({r.kind for r in per_scene}):
        rows = [r for r in per_scene if r.kind == kind]
        per_kind[kind] = {a: mean(a, rows) for a in ("pdms", "min_ade", "mode_coverage", "diversity")}
        per_kind[kind]["n_scenes"] = len(rows)
    return MethodReport(
        name, steps, mean("pdms", per_scene), mean("min_ade", per_scene), mean("mode_coverage", per_scene),
        mean("diversity", per_scene), mean("wall_time", per_scene), per_kind, per_scene,
    )


def evaluate_method(model: Model, scenes: Sequence[Scene], seed: int, name: str | None = None,
                    threshold: float = 0.5, full_path: bool = False) -> MethodReport:
    if not scenes:
        raise EmptySceneSetError("no scenes to evaluate")
    per_scene = []
    for i, scene in enumerate(scenes):
        rng = make_rng(seed, 0xE7A1, i)
        start = time.perf_counter()
        result = run_planner(model, scene, rng)
        elapsed = time.perf_counter() - start
        per_scene.append(scene_metrics(result, scene, elapsed, threshold, full_path))
    return _aggregate(name or model.kind, model.n_steps, per_scene)


def eval_suite(model_trunc: Model, model_vanilla: Model, scenes: Sequence[Scene], seed: int = 42,
               threshold: float = 0.5, full_path: bool = False) -> EvalReport:
    if not scenes:
        raise EmptySceneSetError("no scenes to evaluate")
    methods = [
        evaluate_method(model_trunc, scenes, seed, "truncated", threshold, full_path),
        evaluate_method(model_vanilla, scenes, seed, "vanilla", threshold, full_path),
    ]
    return EvalReport(len(scenes), seed, methods)
