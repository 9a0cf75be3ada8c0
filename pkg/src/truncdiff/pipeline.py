"""Glue between a :class:`RunConfig` and the library objects."""

from __future__ import annotations

from typing import Sequence

from .anchors import AnchorSet, kmeans_anchors
from .config import RunConfig
from .denoiser import CascadeConfig
from .policy import TRUNCATED, VANILLA, Model, TrainConfig, new_model
from .schedule import build_linear_schedule
from .world import Scene
from .world.tokens import D_CTX, N_CTX_MAX


def cascade_config(cfg: RunConfig) -> CascadeConfig:
    c = cfg.cascade
    return CascadeConfig(c.n_stages, c.hidden, c.t_embed, c.t_embed_raw, c.horizon, D_CTX, N_CTX_MAX)


def train_config(cfg: RunConfig, epochs: int | None = None) -> TrainConfig:
    kw = vars(cfg.train).copy()
    if epochs is not None:
        kw["epochs"] = epochs
    return TrainConfig(seed=cfg.seed, **kw)


def fit_anchors(cfg: RunConfig, scenes: Sequence[Scene]) -> AnchorSet:
    corpus = [m for s in scenes for m in s.gt_modes]
    a = cfg.anchors
    return kmeans_anchors(corpus, a.K, a.n_restarts, a.max_iters, cfg.seed)


def build_model(cfg: RunConfig, kind: str, anchors: AnchorSet) -> Model:
    s = cfg.schedule
    sched = build_linear_schedule(s.total_steps, s.beta_start, s.beta_end, s.trunc_fraction)
    p = cfg.policy
    return new_model(
        kind,
        cascade_config(cfg),
        anchors,
        sched,
        cfg.seed + (1 if kind == VANILLA else 0),
        traj_scale=p.traj_scale,
        n_steps=p.n_steps if kind == TRUNCATED else p.vanilla_steps,
        n_samples=p.vanilla_samples,
    )


def split(scenes: Sequence[Scene], name: str) -> list[Scene]:
    return [s for s in scenes if s.split == name]
