"""Training and inference for the truncated anchored policy and the vanilla
diffusion baseline.

Both share the cascade denoiser and the DDIM machinery; they differ in where
sampling starts. The truncated policy draws from an anchored Gaussian at
``t_trunc`` and runs a couple of steps. The vanilla policy starts from
N(0, I) at ``T`` and needs many more. Trajectories are divided by
``traj_scale`` before entering the diffusion space and token features by
fixed per-column scales before the learned lift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import denoiser as dn
from .anchors import AnchorSet, anchored_sample, nearest_anchor
from .errors import InvalidParameterError
from .rng import box_muller, make_rng
from .schedule import NoiseSchedule, ddim_step, diffuse, make_step_grid
from .world import Scene, scene_tokens

TRUNCATED, VANILLA = "truncated", "vanilla"
TOKEN_SCALE = np.array([20.0, 20.0, 1.0, 5.0, 5.0, 1.0])
BCE_CLIP = 30.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"  # or "constant"
    lr_floor: float = 0.05  # final fraction of the peak rate under cosine decay
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_rec: float = 1.0
    lambda_cls: float = 1.0
    deep_supervision: bool = True
    diffuse_source: str = "anchor"
    rec_anchors: str = "positive"
    vanilla_samples: int = 16
    label_threshold: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.vanilla_samples < 1:
            raise InvalidParameterError("epochs must be >= 0, batch_size and vanilla_samples >= 1")
        if self.learning_rate <= 0 or self.adam_eps <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidParameterError("learning rate, eps and Adam betas out of range")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidParameterError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if self.rec_anchors not in ("positive", "all"):
            raise InvalidParameterError(f"rec_anchors must be 'positive' or 'all', got {self.rec_anchors!r}")
        if self.diffuse_source not in ("anchor", "gt"):
            raise InvalidParameterError(f"diffuse_source must be 'anchor' or 'gt', got {self.diffuse_source!r}")


@dataclass
class Model:
    kind: str
    cfg: dn.CascadeConfig
    theta: np.ndarray
    anchors: AnchorSet
    sched: NoiseSchedule
    traj_scale: float = 10.0
    n_steps: int = 2
    n_samples: int = 16  # candidates per scene for the vanilla sampler


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass(frozen=True)
class LossBreakdown:
    rec: float
    cls: float
    total: float


@dataclass
class PlanResult:
    candidates: np.ndarray  # (K, H, 2) meters
    scores: np.ndarray  # (K,)
    chosen: int
    timesteps: list[int] = field(default_factory=list)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def bce_with_logits(logit, label):
    logit = np.asarray(logit, dtype=np.float64)
    return np.maximum(logit, 0.0) - logit * label + np.log1p(np.exp(-np.abs(logit)))


def context(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    tokens, valid = scene_tokens(scene)
    return tokens / TOKEN_SCALE, valid


def adam_update(theta, grads, state: AdamState, cfg: TrainConfig, lr: float | None = None) -> tuple[np.ndarray, AdamState]:
    lr = cfg.learning_rate if lr is None else lr
    step = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads**2
    m_hat = m / (1.0 - cfg.beta1**step)
    v_hat = v / (1.0 - cfg.beta2**step)
    return theta - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps), AdamState(m, v, step)


def learning_rate_at(cfg: TrainConfig, progress: float) -> float:
    """Rate after a fraction ``progress`` in [0, 1] of training."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    frac = cfg.lr_floor + (1.0 - cfg.lr_floor) * 0.5 * (1.0 + np.cos(np.pi * min(max(progress, 0.0), 1.0)))
    return cfg.learning_rate * frac


@dataclass
class Batch:
    """Fixed network inputs and targets for one optimisation step.

    ``rows`` groups consecutive network rows by scene: scene ``i`` owns rows
    ``rows[i]:rows[i+1]``. ``rec_rows`` marks rows supervised by the L1 loss
    and ``labels`` holds classification targets (``None`` for vanilla, whose
    labels are derived from the predictions).
    """

    x_t: np.ndarray
    t: np.ndarray
    ctx: np.ndarray  # one context per scene
    mask: np.ndarray
    ctx_index: np.ndarray  # row -> scene
    target: np.ndarray  # normalized gt per row
    rec_rows: np.ndarray  # bool per row
    labels: np.ndarray | None
    rows: np.ndarray
    modes: list[np.ndarray]  # normalized gt modes per scene
    source: np.ndarray  # gt mode index per scene


def _supervised_stages(cfg: dn.CascadeConfig, tcfg: TrainConfig) -> list[int]:
    return list(range(cfg.n_stages)) if tcfg.deep_supervision else [cfg.n_stages - 1]


def _vanilla_labels(x0_hat: np.ndarray, batch: Batch, scale: float, threshold: float) -> np.ndarray:
    labels = np.zeros(len(x0_hat))
    for i in range(len(batch.modes)):
        lo, hi = batch.rows[i], batch.rows[i + 1]
        pred = x0_hat[lo:hi].reshape(hi - lo, -1, 2)
        modes = batch.modes[i].reshape(len(batch.modes[i]), -1, 2)
        ade = np.linalg.norm(pred[:, None] - modes[None], axis=3).mean(axis=2) * scale
        best = ade.argmin(axis=1)
        labels[lo:hi] = (best == batch.source[i]) & (ade[np.arange(hi - lo), best] < threshold)
    return labels


def loss_and_grad(theta, cfg: dn.CascadeConfig, tcfg: TrainConfig, batch: Batch, traj_scale: float = 1.0):
    """Total loss and its gradient for fixed inputs."""
    stages = _supervised_stages(cfg, tcfg)
    n_scenes = len(batch.rows) - 1
    counts = np.diff(batch.rows)
    row_scene = np.repeat(np.arange(n_scenes), counts)
    # per-row weights that turn sums into per-scene means then a batch mean
    rec_w = np.zeros(len(batch.x_t))
    n_rec = np.bincount(row_scene, weights=batch.rec_rows.astype(float), minlength=n_scenes)
    rec_w[batch.rec_rows] = 1.0 / (n_rec[row_scene[batch.rec_rows]] * n_scenes)
    cls_w = 1.0 / (counts[row_scene] * n_scenes)
    D = cfg.traj_dim

    def upstream(outputs):
        g_x0 = [np.zeros_like(o.x0_hat) for o in outputs]
        g_logit = [np.zeros_like(o.score_logit) for o in outputs]
        rec = 0.0
        for m in stages:
            diff = outputs[m].x0_hat - batch.target
            rec += float((np.abs(diff).mean(axis=1) * rec_w).sum()) / len(stages)
            g_x0[m] = tcfg.lambda_rec * np.sign(diff) * (rec_w / (D * len(stages)))[:, None]
        final = outputs[-1]
        labels = batch.labels
        if labels is None:
            labels = _vanilla_labels(final.x0_hat, batch, traj_scale, tcfg.label_threshold)
        cls = float((bce_with_logits(final.score_logit, labels) * cls_w).sum())
        g_logit[-1] = tcfg.lambda_cls * (sigmoid(final.score_logit) - labels) * cls_w
        total = tcfg.lambda_rec * rec + tcfg.lambda_cls * cls
        return g_x0, g_logit, LossBreakdown(rec, cls, total)

    _, grad, (loss,) = dn.forward_with_grad(
        theta, cfg, batch.x_t, batch.t, batch.ctx, batch.mask, upstream, batch.ctx_index
    )
    return loss, grad


def make_batch(model: Model, scenes: Sequence[Scene], gts: Sequence[np.ndarray], tcfg: TrainConfig, rng) -> Batch:
    """Sample timesteps and noisy inputs for one step of either policy."""
    sched, s = model.sched, model.traj_scale
    A = model.anchors.flat() / s
    K = A.shape[0]
    xs, ts, ctxs, masks, targets, rec_rows, labels, rows, modes, source = [], [], [], [], [], [], [], [0], [], []
    for scene, gt in zip(scenes, gts):
        gt = np.asarray(gt, dtype=np.float64)
        g = gt.reshape(-1) / s
        tok, valid = context(scene)
        src = int(np.argmin([np.abs(mode - gt).sum() for mode in scene.gt_modes]))
        if model.kind == TRUNCATED:
            t = int(rng.integers(1, sched.trunc_step + 1))
            p = nearest_anchor(gt, model.anchors)
            x = anchored_sample(A, sched, t, rng)
            if tcfg.diffuse_source == "gt":
                x[p] = diffuse(g, t, box_muller(rng, g.shape), sched)
            n = K
            xs.append(x)
            ts.append(np.full(n, t))
            rec = np.zeros(n, dtype=bool)
            rec[p] = True
            target = np.broadcast_to(g, (n, g.size))
            if tcfg.rec_anchors == "all":
                # every anchor regresses onto the gt mode nearest to it
                flat_modes = scene.gt_modes.reshape(len(scene.gt_modes), -1) / s
                near = ((A[:, None] - flat_modes[None]) ** 2).sum(axis=2).argmin(axis=1)
                target = flat_modes[near]
                target[p] = g
                rec[:] = True
            lab = np.zeros(n)
            lab[p] = 1.0
            labels.append(lab)
        else:
            n = tcfg.vanilla_samples
            t = rng.integers(1, sched.total_steps + 1, size=n)
            eps = box_muller(rng, (n, g.size))
            xs.append(np.stack([diffuse(g, int(ti), e, sched) for ti, e in zip(t, eps)]))
            ts.append(t)
            rec = np.ones(n, dtype=bool)
            target = np.broadcast_to(g, (n, g.size))
        rec_rows.append(rec)
        ctxs.append(tok)
        masks.append(valid)
        targets.append(target)
        rows.append(rows[-1] + n)
        modes.append(scene.gt_modes.reshape(len(scene.gt_modes), -1) / s)
        source.append(src)
    return Batch(
        x_t=np.concatenate(xs),
        t=np.concatenate(ts).astype(np.float64),
        ctx=np.stack(ctxs),
        mask=np.stack(masks),
        ctx_index=np.repeat(np.arange(len(ctxs)), np.diff(rows)),
        target=np.concatenate(targets),
        rec_rows=np.concatenate(rec_rows),
        labels=np.concatenate(labels) if model.kind == TRUNCATED else None,
        rows=np.array(rows),
        modes=modes,
        source=np.array(source),
    )


def training_step(model: Model, opt_state: AdamState, scenes, gts, tcfg: TrainConfig, rng, lr: float | None = None):
    """One Adam step on a batch of (scene, ground-truth mode) pairs.

    A single scene and trajectory may be passed instead of sequences.
    Updates ``model.theta`` in place of the old vector and returns
    ``(theta, opt_state, LossBreakdown)``.
    """
    if isinstance(scenes, Scene):
        scenes, gts = [scenes], [gts]
    batch = make_batch(model, scenes, gts, tcfg, rng)
    loss, grad = loss_and_grad(model.theta, model.cfg, tcfg, batch, model.traj_scale)
    model.theta, opt_state = adam_update(model.theta, grad, opt_state, tcfg, lr)
    return model.theta, opt_state, loss


def train(model: Model, scenes: Sequence[Scene], tcfg: TrainConfig, on_epoch: Callable | None = None):
    """Train for ``tcfg.epochs`` epochs; returns the per-epoch mean losses."""
    rng = make_rng(tcfg.seed, 2 if model.kind == VANILLA else 1)
    opt = AdamState.zeros(model.theta.size)
    history = []
    steps_per_epoch = -(-len(scenes) // tcfg.batch_size)
    total_steps = max(tcfg.epochs * steps_per_epoch, 1)
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(scenes))
        losses = []
        for lo in range(0, len(order), tcfg.batch_size):
            idx = order[lo : lo + tcfg.batch_size]
            batch_scenes = [scenes[i] for i in idx]
            gts = [sc.gt_modes[rng.integers(len(sc.gt_modes))] for sc in batch_scenes]
            lr = learning_rate_at(tcfg, opt.step / total_steps)
            _, opt, loss = training_step(model, opt, batch_scenes, gts, tcfg, rng, lr)
            losses.append(loss)
        mean = LossBreakdown(*(float(np.mean([getattr(l, f) for l in losses])) for f in ("rec", "cls", "total")))
        history.append(mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    return history


def _network_denoiser(model: Model, scene: Scene):
    tok, valid = context(scene)

    def denoise(x, t):
        out = dn.forward(model.theta, model.cfg, x, t, tok, valid)[-1]
        return out.x0_hat, out.score_logit

    return denoise


def _sample(model: Model, x, grid, denoise, max_t: int) -> PlanResult:
    logits = np.zeros(len(x))
    for t, t_next in zip(grid[:-1], grid[1:]):
        if t > max_t:
            raise AssertionError(f"denoiser evaluated at t={t} beyond {max_t}")
        x0_hat, logits = denoise(x, t)
        x = ddim_step(x, x0_hat, t, t_next, model.sched)
    cands = (x * model.traj_scale).reshape(len(x), -1, 2)
    # pick on logits: sigmoid saturates to exactly 1.0 past ~37 and would tie
    return PlanResult(cands, sigmoid(logits), int(np.argmax(logits)), list(grid))


def plan(model: Model, scene: Scene, rng, n_steps: int | None = None, denoise=None) -> PlanResult:
    """Anchored truncated sampling: one candidate per anchor."""
    sched = model.sched
    grid = make_step_grid(sched.trunc_step, n_steps or model.n_steps)
    x = anchored_sample(model.anchors.flat() / model.traj_scale, sched, sched.trunc_step, rng)
    return _sample(model, x, grid, denoise or _network_denoiser(model, scene), sched.trunc_step)


def vanilla_plan(model: Model, scene: Scene, rng, n_steps: int | None = None, n_samples: int | None = None, denoise=None) -> PlanResult:
    """Baseline sampling from N(0, I) at ``T``."""
    sched = model.sched
    grid = make_step_grid(sched.total_steps, n_steps or model.n_steps)
    x = box_muller(rng, (n_samples or model.n_samples, model.cfg.traj_dim))
    return _sample(model, x, grid, denoise or _network_denoiser(model, scene), sched.total_steps)


def run_planner(model: Model, scene: Scene, rng) -> PlanResult:
    return plan(model, scene, rng) if model.kind == TRUNCATED else vanilla_plan(model, scene, rng)


def select(result: PlanResult) -> np.ndarray:
    return result.candidates[result.chosen]


def new_model(kind: str, cfg: dn.CascadeConfig, anchors: AnchorSet, sched: NoiseSchedule, seed: int, **kw) -> Model:
    if kind not in (TRUNCATED, VANILLA):
        raise InvalidParameterError(f"unknown policy kind {kind!r}")
    return Model(kind, cfg, dn.init_params(cfg, seed), anchors, sched, **kw)


__all__ = [
    "AdamState",
    "LossBreakdown",
    "Model",
    "PlanResult",
    "TrainConfig",
    "adam_update",
    "loss_and_grad",
    "make_batch",
    "new_model",
    "plan",
    "select",
    "train",
    "training_step",
    "vanilla_plan",
]
