"""Seeded random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator`` so a
run is reproducible from its seed alone. Normal draws go through Box-Muller
on the generator's uniforms rather than numpy's ziggurat sampler.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``, optionally split into an independent sub-stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), *stream])))


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    n = int(np.prod(shape, dtype=np.int64))
    m = (n + 1) // 2
    # 1 - U lies in (0, 1], keeping the log finite
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n].reshape(shape)
