"""Linear-beta noise schedule, forward diffusion and deterministic DDIM steps.

Timesteps run 1..T; ``alpha_bars[0] == 1`` is the clean state, so ``t = 0``
always means "no noise". The denoiser predicts clean trajectories directly,
which is why :func:`ddim_step` takes an ``x0_hat`` rather than a noise guess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, StepOrderError, TimestepRangeError


@dataclass(frozen=True)
class NoiseSchedule:
    total_steps: int
    betas: np.ndarray  # betas[t - 1] is the beta of step t
    alphas: np.ndarray
    alpha_bars: np.ndarray  # length T + 1, alpha_bars[0] == 1
    trunc_step: int
    beta_start: float
    beta_end: float
    trunc_fraction: float

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def to_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "trunc_fraction": self.trunc_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return build_linear_schedule(d["total_steps"], d["beta_start"], d["beta_end"], d["trunc_fraction"])


def build_linear_schedule(
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    trunc_fraction: float = 0.05,
) -> NoiseSchedule:
    if int(T) != T or T < 2:
        raise InvalidParameterError(f"T must be an integer >= 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidParameterError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if not (0.0 < trunc_fraction <= 1.0) or trunc_fraction * T < 1.0:
        raise InvalidParameterError(f"trunc_fraction {trunc_fraction} invalid for T={T}")
    T = int(T)
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.empty(T + 1, dtype=np.float64)
    alpha_bars[0] = 1.0
    alpha_bars[1:] = np.cumprod(alphas)
    trunc = min(max(int(np.floor(trunc_fraction * T + 0.5)), 1), T)
    for arr in (betas, alphas, alpha_bars):
        arr.setflags(write=False)
    return NoiseSchedule(T, betas, alphas, alpha_bars, trunc, float(beta_start), float(beta_end), float(trunc_fraction))


def _check_t(t: int, sched: NoiseSchedule) -> None:
    if not (0 <= t <= sched.total_steps):
        raise TimestepRangeError(f"timestep {t} outside [0, {sched.total_steps}]")


def diffuse(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    _check_t(t, sched)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise InvalidParameterError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    ab = sched.alpha_bars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_step(x_t: np.ndarray, x0_hat: np.ndarray, t: int, t_next: int, sched: NoiseSchedule) -> np.ndarray:
    """One eta = 0 DDIM update from ``t`` to ``t_next`` given a clean estimate."""
    _check_t(t, sched)
    _check_t(t_next, sched)
    if t_next >= t:
        raise StepOrderError(f"t_next={t_next} must be < t={t}")
    ab, ab_next = sched.alpha_bars[t], sched.alpha_bars[t_next]
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    eps_hat = (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)
    return np.sqrt(ab_next) * x0_hat + np.sqrt(1.0 - ab_next) * eps_hat


def make_step_grid(start: int, n_steps: int) -> list[int]:
    """``n_steps + 1`` evenly spaced integer timesteps from ``start`` down to 0."""
    if int(n_steps) != n_steps or n_steps < 1 or start < n_steps:
        raise InvalidParameterError(f"cannot build a {n_steps}-step grid from {start}")
    raw = np.linspace(start, 0, int(n_steps) + 1)
    grid = [int(np.floor(v + 0.5)) for v in raw]
    for i in range(1, len(grid) - 1):
        if grid[i] >= grid[i - 1]:
            grid[i] = grid[i - 1] - 1
    grid[0], grid[-1] = int(start), 0
    return grid
