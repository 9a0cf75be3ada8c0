"""Fixed-shape raw context tokens for the denoiser's cross-attention."""

from __future__ import annotations

import numpy as np

from ..errors import TooManyObstaclesError
from .geometry import resample
from .scenes import Scene

MAX_OBSTACLES = 3
N_ROUTE_TOKENS = 8
N_CTX_MAX = MAX_OBSTACLES + 1 + N_ROUTE_TOKENS
D_CTX = 6
TAG_OBSTACLE, TAG_EGO, TAG_ROUTE = 1.0, 2.0, 3.0


def scene_tokens(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """Rows: obstacles, then ego, then route points; zero padding at the end.

    Returns ``(tokens, valid)`` of shapes ``(12, 6)`` and ``(12,)``.
    """
    if len(scene.obstacles) > MAX_OBSTACLES:
        raise TooManyObstaclesError(f"{len(scene.obstacles)} obstacles exceeds the limit of {MAX_OBSTACLES}")
    rows = [[*o.center, o.radius, *o.velocity, TAG_OBSTACLE] for o in scene.obstacles]
    rows.append([scene.speed, scene.heading, 0.0, 0.0, 0.0, TAG_EGO])
    rows.extend([x, y, 0.0, 0.0, 0.0, TAG_ROUTE] for x, y in resample(scene.route, N_ROUTE_TOKENS))
    tokens = np.zeros((N_CTX_MAX, D_CTX))
    tokens[: len(rows)] = rows
    valid = np.zeros(N_CTX_MAX, dtype=bool)
    valid[: len(rows)] = True
    return tokens, valid
