"""Cascade conditional denoiser with hand-derived reverse-mode gradients.

Each of the ``M`` stages takes the current trajectory estimate ``u`` and the
timestep, runs an input MLP, a single-head cross-attention over the lifted
scene tokens and a feed-forward block, and emits a residual correction
(``x0_hat = u + head(h)``) plus a confidence logit. Stage ``m + 1`` starts
from stage ``m``'s ``x0_hat``.

All arrays are float64 and batched along the leading axis. Parameters live
in one flat vector; :class:`ParamLayout` maps names to slices of it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import MaskedContextError, ModelFormatError, ShapeMismatchError
from .rng import make_rng

MAGIC = b"TDPL1"


@dataclass(frozen=True)
class CascadeConfig:
    n_stages: int = 2
    hidden: int = 64
    t_embed: int = 16
    t_embed_raw: int = 16
    horizon: int = 8
    d_ctx: int = 6
    n_ctx: int = 12

    def __post_init__(self):
        for name, v in vars(self).items():
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.hidden % 2 or self.t_embed_raw % 2:
            raise ValueError("hidden and t_embed_raw must be even")

    @property
    def traj_dim(self) -> int:
        return 2 * self.horizon

    def header_fields(self) -> tuple[int, ...]:
        return (self.horizon, self.hidden, self.t_embed, self.t_embed_raw, self.d_ctx, self.n_stages, self.n_ctx)

    @cached_property
    def layout(self) -> "ParamLayout":
        return ParamLayout(self)


class ParamLayout:
    """Name -> (slice, shape) table tiling the flat parameter vector."""

    def __init__(self, cfg: CascadeConfig):
        d, P, td = cfg.hidden, cfg.traj_dim, cfg.t_embed
        shapes: list[tuple[str, tuple[int, ...]]] = [
            ("ctx.W", (cfg.d_ctx, d)),
            ("ctx.b", (d,)),
            ("time.W", (cfg.t_embed_raw, td)),
            ("time.b", (td,)),
        ]
        for m in range(cfg.n_stages):
            shapes += [
                (f"s{m}.in1.W", (P + td, d)),
                (f"s{m}.in1.b", (d,)),
                (f"s{m}.in2.W", (d, d)),
                (f"s{m}.in2.b", (d,)),
                (f"s{m}.Wq", (d, d)),
                (f"s{m}.Wk", (d, d)),
                (f"s{m}.Wv", (d, d)),
                (f"s{m}.ffn1.W", (d, 2 * d)),
                (f"s{m}.ffn1.b", (2 * d,)),
                (f"s{m}.ffn2.W", (2 * d, d)),
                (f"s{m}.ffn2.b", (d,)),
                (f"s{m}.traj.W", (d, P)),
                (f"s{m}.traj.b", (P,)),
                (f"s{m}.score.W", (d, 1)),
                (f"s{m}.score.b", (1,)),
            ]
        self.entries: dict[str, tuple[slice, tuple[int, ...]]] = {}
        off = 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            self.entries[name] = (slice(off, off + n), shape)
            off += n
        self.size = off

    def view(self, theta: np.ndarray, name: str) -> np.ndarray:
        sl, shape = self.entries[name]
        return theta[sl].reshape(shape)

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {name: self.view(theta, name) for name in self.entries}

    def pack(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.size)
        for name, (sl, _) in self.entries.items():
            out[sl] = np.asarray(parts[name]).reshape(-1)
        return out


def time_embed(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding, ``[sin(t f_i), cos(t f_i)]`` pairs with ``f_i = 10000^(-2i/dim)``."""
    t = np.asarray(t, dtype=np.float64)
    freqs = 10000.0 ** (-2.0 * np.arange(dim // 2) / dim)
    ang = t[..., None] * freqs
    out = np.empty(t.shape + (dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def init_params(cfg: CascadeConfig, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, trajectory heads scaled by 0.01."""
    layout = cfg.layout
    rng = make_rng(seed, 31337)
    theta = np.zeros(layout.size)
    for name, (sl, shape) in layout.entries.items():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            w = rng.uniform(-limit, limit, size=shape[0] * shape[1])
            if name.endswith("traj.W"):
                w *= 0.01
            theta[sl] = w
    return theta


@dataclass
class StageOutput:
    x0_hat: np.ndarray  # (B, 2H)
    score_logit: np.ndarray  # (B,)


def _check_inputs(cfg: CascadeConfig, x_t, t, ctx, mask, ctx_index=None):
    """Normalize inputs to a row batch plus per-context arrays and a row->context index."""
    x_t = np.asarray(x_t, dtype=np.float64)
    single = x_t.ndim == 1
    X = np.atleast_2d(x_t)
    C = np.asarray(ctx, dtype=np.float64)
    V = np.asarray(mask, dtype=bool)
    if C.ndim == 2:
        C, V = C[None], V[None]
        idx = np.zeros(X.shape[0], dtype=np.intp)
    elif ctx_index is None:
        if C.shape[0] != X.shape[0]:
            raise ShapeMismatchError(f"{C.shape[0]} contexts for {X.shape[0]} rows")
        idx = np.arange(X.shape[0])
    else:
        idx = np.asarray(ctx_index, dtype=np.intp)
        if idx.shape != (X.shape[0],) or idx.min() < 0 or idx.max() >= C.shape[0]:
            raise ShapeMismatchError("ctx_index does not map rows onto contexts")
    if X.shape[1] != cfg.traj_dim:
        raise ShapeMismatchError(f"trajectory length {X.shape[1]} != {cfg.traj_dim}")
    if C.shape[1:] != (cfg.n_ctx, cfg.d_ctx) or V.shape != C.shape[:2]:
        raise ShapeMismatchError(f"context shape {C.shape} / mask {V.shape} do not match config")
    if not V.any(axis=1).all():
        raise MaskedContextError("every context token is masked")
    tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],))
    return X, tt, C, V, idx, single


def _forward_cache(theta, cfg: CascadeConfig, X, tt, C, V, idx):
    p = cfg.layout.unpack(theta)
    scale = 1.0 / np.sqrt(cfg.hidden)
    temb_raw = time_embed(tt, cfg.t_embed_raw)
    te = temb_raw @ p["time.W"] + p["time.b"]
    Cm = np.where(V[..., None], C, 0.0)  # masked rows never reach the network
    Cl = Cm @ p["ctx.W"] + p["ctx.b"]
    neg = np.where(V, 0.0, -np.inf)[idx]
    cache = {"p": p, "temb_raw": temb_raw, "te": te, "Cm": Cm, "Cl": Cl, "idx": idx, "stages": []}
    outputs = []
    u = X
    for m in range(cfg.n_stages):
        s = f"s{m}."
        inp = np.concatenate([u, te], axis=1)
        z1 = inp @ p[s + "in1.W"] + p[s + "in1.b"]
        a1 = np.maximum(z1, 0.0)
        h0 = a1 @ p[s + "in2.W"] + p[s + "in2.b"]
        q = h0 @ p[s + "Wq"]
        # keys/values once per distinct context, then gathered per row
        K = (Cl @ p[s + "Wk"])[idx]
        Vv = (Cl @ p[s + "Wv"])[idx]
        logits = np.einsum("bd,bnd->bn", q, K) * scale + neg
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        attn = np.einsum("bn,bnd->bd", w, Vv)
        h1 = h0 + attn
        f1 = h1 @ p[s + "ffn1.W"] + p[s + "ffn1.b"]
        g1 = np.maximum(f1, 0.0)
        h2 = h1 + g1 @ p[s + "ffn2.W"] + p[s + "ffn2.b"]
        x0 = u + h2 @ p[s + "traj.W"] + p[s + "traj.b"]
        logit = (h2 @ p[s + "score.W"] + p[s + "score.b"])[:, 0]
        cache["stages"].append(
            dict(inp=inp, z1=z1, a1=a1, h0=h0, q=q, K=K, Vv=Vv, w=w, h1=h1, f1=f1, g1=g1, h2=h2)
        )
        outputs.append(StageOutput(x0, logit))
        u = x0
    return outputs, cache


def forward(theta, cfg: CascadeConfig, x_t, t, ctx, mask, ctx_index=None) -> list[StageOutput]:
    """Run all stages.

    ``x_t`` is one ``2H`` vector or a ``(B, 2H)`` batch. ``ctx``/``mask`` are
    either shared by every row (``(N, d_ctx)``/``(N,)``), one per row, or a
    stack of ``S`` contexts addressed by ``ctx_index`` (``(B,)`` ints).
    """
    X, tt, C, V, idx, single = _check_inputs(cfg, x_t, t, ctx, mask, ctx_index)
    outputs, _ = _forward_cache(theta, cfg, X, tt, C, V, idx)
    if single:
        return [StageOutput(o.x0_hat[0], o.score_logit[0]) for o in outputs]
    return outputs


def forward_with_grad(theta, cfg: CascadeConfig, x_t, t, ctx, mask, upstream_fn, ctx_index=None):
    """Forward pass, then backward with upstream partials computed from the
    outputs by ``upstream_fn(outputs) -> (list of dx0 arrays, list of dlogit arrays)``.

    Returns ``(outputs, grad, extra)`` where ``extra`` is whatever the
    upstream function returned beyond the two gradient lists.
    """
    X, tt, C, V, idx, _ = _check_inputs(cfg, x_t, t, ctx, mask, ctx_index)
    outputs, cache = _forward_cache(theta, cfg, X, tt, C, V, idx)
    g_x0, g_logit, *extra = upstream_fn(outputs)
    return outputs, _backward_from_cache(cfg, cache, g_x0, g_logit), extra


def backward(theta, cfg: CascadeConfig, x_t, t, ctx, mask, upstream, ctx_index=None) -> np.ndarray:
    """Gradient of ``sum_m <g_x0[m], x0_hat[m]> + <g_logit[m], logit[m]>``.

    ``upstream`` is ``(g_x0, g_logit)``, one entry per stage shaped like the
    corresponding forward outputs.
    """
    X, tt, C, V, idx, _ = _check_inputs(cfg, x_t, t, ctx, mask, ctx_index)
    _, cache = _forward_cache(theta, cfg, X, tt, C, V, idx)
    g_x0, g_logit = upstream
    g_x0 = [np.atleast_2d(np.asarray(g, dtype=np.float64)) for g in g_x0]
    g_logit = [np.atleast_1d(np.asarray(g, dtype=np.float64)) for g in g_logit]
    return _backward_from_cache(cfg, cache, g_x0, g_logit)


def _backward_from_cache(cfg: CascadeConfig, cache, g_x0, g_logit) -> np.ndarray:
    p = cache["p"]
    layout = cfg.layout
    grad = np.zeros(layout.size)
    G = {name: layout.view(grad, name) for name in layout.entries}
    scale = 1.0 / np.sqrt(cfg.hidden)
    P = cfg.traj_dim
    Cl, idx = cache["Cl"], cache["idx"]
    n_ctx_sets = Cl.shape[0]
    gCl = np.zeros_like(Cl)
    gte = np.zeros_like(cache["te"])
    gu_next = 0.0
    for m in reversed(range(cfg.n_stages)):
        s = f"s{m}."
        c = cache["stages"][m]
        gx0 = g_x0[m] + gu_next
        gl = g_logit[m]
        h2 = c["h2"]
        G[s + "traj.W"][...] = h2.T @ gx0
        G[s + "traj.b"][...] = gx0.sum(axis=0)
        G[s + "score.W"][...] = h2.T @ gl[:, None]
        G[s + "score.b"][...] = gl.sum()
        gh2 = gx0 @ p[s + "traj.W"].T + gl[:, None] * p[s + "score.W"][:, 0]
        gu = gx0.copy()
        # feed-forward residual
        G[s + "ffn2.W"][...] = c["g1"].T @ gh2
        G[s + "ffn2.b"][...] = gh2.sum(axis=0)
        gf1 = (gh2 @ p[s + "ffn2.W"].T) * (c["f1"] > 0)
        G[s + "ffn1.W"][...] = c["h1"].T @ gf1
        G[s + "ffn1.b"][...] = gf1.sum(axis=0)
        gh1 = gh2 + gf1 @ p[s + "ffn1.W"].T
        # attention residual
        w, K, Vv, q = c["w"], c["K"], c["Vv"], c["q"]
        gV = w[:, :, None] * gh1[:, None, :]
        dw = np.einsum("bd,bnd->bn", gh1, Vv)
        dlog = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        gq = np.einsum("bn,bnd->bd", dlog, K) * scale
        gK = dlog[:, :, None] * q[:, None, :] * scale
        G[s + "Wq"][...] = c["h0"].T @ gq
        gK = _scatter_rows(gK, idx, n_ctx_sets)
        gV = _scatter_rows(gV, idx, n_ctx_sets)
        G[s + "Wk"][...] = np.einsum("bnc,bnd->cd", Cl, gK)
        G[s + "Wv"][...] = np.einsum("bnc,bnd->cd", Cl, gV)
        gCl += gK @ p[s + "Wk"].T + gV @ p[s + "Wv"].T
        gh0 = gh1 + gq @ p[s + "Wq"].T
        # input MLP
        G[s + "in2.W"][...] = c["a1"].T @ gh0
        G[s + "in2.b"][...] = gh0.sum(axis=0)
        gz1 = (gh0 @ p[s + "in2.W"].T) * (c["z1"] > 0)
        G[s + "in1.W"][...] = c["inp"].T @ gz1
        G[s + "in1.b"][...] = gz1.sum(axis=0)
        ginp = gz1 @ p[s + "in1.W"].T
        gu += ginp[:, :P]
        gte += ginp[:, P:]
        gu_next = gu
    G["time.W"][...] = cache["temb_raw"].T @ gte
    G["time.b"][...] = gte.sum(axis=0)
    G["ctx.W"][...] = np.einsum("bnc,bnd->cd", cache["Cm"], gCl)
    G["ctx.b"][...] = gCl.sum(axis=(0, 1))
    return grad


def _scatter_rows(g: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    if n == len(idx) and np.array_equal(idx, np.arange(n)):
        return g
    onehot = np.zeros((n, len(idx)))
    onehot[idx, np.arange(len(idx))] = 1.0
    return (onehot @ g.reshape(len(idx), -1)).reshape((n,) + g.shape[1:])


def relu_pattern(theta, cfg: CascadeConfig, x_t, t, ctx, mask, ctx_index=None) -> np.ndarray:
    """Boolean activation pattern of every ReLU, for locating kinks."""
    X, tt, C, V, idx, _ = _check_inputs(cfg, x_t, t, ctx, mask, ctx_index)
    _, cache = _forward_cache(theta, cfg, X, tt, C, V, idx)
    return np.concatenate([np.concatenate([(c["z1"] > 0).ravel(), (c["f1"] > 0).ravel()]) for c in cache["stages"]])


def save_params(f, cfg: CascadeConfig, theta: np.ndarray) -> None:
    """Write ``TDPL1`` + config fields and size as int64 LE + float64 LE vector."""
    theta = np.asarray(theta, dtype="<f8")
    f.write(MAGIC)
    f.write(struct.pack("<8q", *cfg.header_fields(), theta.size))
    f.write(theta.tobytes())


def load_params(f) -> tuple[CascadeConfig, np.ndarray]:
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise ModelFormatError(f"bad parameter magic {magic!r}")
    H, d, dt, dtr, dc, M, nc, n = struct.unpack("<8q", f.read(64))
    cfg = CascadeConfig(n_stages=M, hidden=d, t_embed=dt, t_embed_raw=dtr, horizon=H, d_ctx=dc, n_ctx=nc)
    if n != cfg.layout.size:
        raise ModelFormatError(f"parameter count {n} does not match config ({cfg.layout.size})")
    buf = f.read(8 * n)
    if len(buf) != 8 * n:
        raise ModelFormatError("truncated parameter vector")
    return cfg, np.frombuffer(buf, dtype="<f8").astype(np.float64)
