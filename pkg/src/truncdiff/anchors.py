"""Trajectory anchors from k-means over a ground-truth corpus.

Trajectories are ``(H, 2)`` waypoint arrays in the ego frame and are
clustered as flattened ``2H`` vectors under plain Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CorpusTooSmallError, DimensionMismatchError, TimestepRangeError
from .rng import box_muller, make_rng
from .schedule import NoiseSchedule, diffuse


@dataclass(frozen=True)
class AnchorSet:
    anchors: np.ndarray  # (K, H, 2)
    inertia: float

    @property
    def K(self) -> int:
        return self.anchors.shape[0]

    @property
    def horizon(self) -> int:
        return self.anchors.shape[1]

    def flat(self) -> np.ndarray:
        return self.anchors.reshape(self.K, -1)


def _flatten(corpus: Sequence[np.ndarray]) -> np.ndarray:
    shapes = {np.shape(c) for c in corpus}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"trajectories have differing shapes: {sorted(shapes)}")
    X = np.asarray(corpus, dtype=np.float64)
    return X.reshape(len(corpus), -1)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)


def _seed_centers(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    # k-means++ (D^2) seeding
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def lloyd(X: np.ndarray, centers: np.ndarray, max_iters: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd iterations; returns (centers, labels, inertia trace)."""
    C = centers.copy()
    K = len(C)
    trace: list[float] = []
    labels = None
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        new_labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(len(X)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            members = labels == k
            if members.any():
                C[k] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-fit point
                resid = ((X - C[labels]) ** 2).sum(axis=1)
                far = int(resid.argmax())
                C[k] = X[far]
                labels[far] = k
    d2 = _sq_dists(X, C)
    labels = d2.argmin(axis=1)
    return C, labels, trace


def kmeans_anchors(
    corpus: Sequence[np.ndarray],
    K: int = 16,
    n_restarts: int = 10,
    max_iters: int = 100,
    seed: int = 0,
) -> AnchorSet:
    if len(corpus) < K:
        raise CorpusTooSmallError(f"corpus of {len(corpus)} trajectories cannot form {K} clusters")
    if K < 1 or n_restarts < 1 or max_iters < 1:
        raise ValueError("K, n_restarts and max_iters must be positive")
    first = np.shape(corpus[0])
    X = _flatten(corpus)
    best_C, best_inertia = None, np.inf
    # restarts reduce by (inertia, restart index) so ordering is deterministic
    for r in range(n_restarts):
        rng = make_rng(seed, r)
        C, labels, _ = lloyd(X, _seed_centers(X, K, rng), max_iters)
        for k in range(K):
            if (labels == k).any():
                C[k] = X[labels == k].mean(axis=0)
        inertia = float(((X - C[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_C, best_inertia = C, inertia
    return AnchorSet(best_C.reshape((K,) + tuple(first)), best_inertia)


def nearest_anchor(traj: np.ndarray, anchors: AnchorSet) -> int:
    v = np.asarray(traj, dtype=np.float64).reshape(-1)
    A = anchors.flat()
    if v.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"trajectory length {v.shape[0]} != anchor length {A.shape[1]}")
    # argmin returns the first minimum, i.e. lowest index on ties
    return int(((A - v) ** 2).sum(axis=1).argmin())


def anchored_sample(
    anchor: np.ndarray,
    sched: NoiseSchedule,
    t: int,
    rng: np.random.Generator | None,
    eps: np.ndarray | None = None,
) -> np.ndarray:
    """Draw from N(sqrt(abar_t) * anchor, (1 - abar_t) I).

    ``eps`` overrides the Gaussian draw (pass zeros to get the mean).
    """
    if not (1 <= t <= sched.trunc_step):
        raise TimestepRangeError(f"anchored timestep {t} outside [1, {sched.trunc_step}]")
    anchor = np.asarray(anchor, dtype=np.float64)
    if eps is None:
        eps = box_muller(rng, anchor.shape)
    return diffuse(anchor, t, eps, sched)
