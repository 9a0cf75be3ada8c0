"""Trained-model container.

Layout, all integers int64 little-endian and reals float64 little-endian::

    parameter block   b"TDPL1", 8 ints (H, d, d_t, d_t_raw, d_ctx, M, N_c_max, n),
                      n reals
    anchor block      b"TDPA1", K, H, K*H*2 reals (row-major), inertia
    settings block    b"TDPS1", byte length L, L bytes of UTF-8 JSON with
                      keys kind, n_samples, n_steps, schedule, traj_scale
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import denoiser as dn
from .anchors import AnchorSet
from .errors import ModelFormatError
from .policy import Model
from .schedule import NoiseSchedule

ANCHOR_MAGIC = b"TDPA1"
SETTINGS_MAGIC = b"TDPS1"


def _expect(f, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise ModelFormatError(f"expected block {magic!r}, found {got!r}")


def save_model(path, model: Model) -> None:
    settings = {
        "kind": model.kind,
        "n_samples": model.n_samples,
        "n_steps": model.n_steps,
        "schedule": model.sched.to_dict(),
        "traj_scale": model.traj_scale,
    }
    blob = json.dumps(settings, sort_keys=True).encode("utf-8")
    A = np.ascontiguousarray(model.anchors.anchors, dtype="<f8")
    with open(path, "wb") as f:
        dn.save_params(f, model.cfg, model.theta)
        f.write(ANCHOR_MAGIC)
        f.write(struct.pack("<2q", A.shape[0], A.shape[1]))
        f.write(A.tobytes())
        f.write(struct.pack("<d", model.anchors.inertia))
        f.write(SETTINGS_MAGIC)
        f.write(struct.pack("<q", len(blob)))
        f.write(blob)


def load_model(path) -> Model:
    with open(path, "rb") as f:
        cfg, theta = dn.load_params(f)
        _expect(f, ANCHOR_MAGIC)
        K, H = struct.unpack("<2q", f.read(16))
        if H != cfg.horizon:
            raise ModelFormatError(f"anchor horizon {H} != parameter horizon {cfg.horizon}")
        A = np.frombuffer(f.read(8 * K * H * 2), dtype="<f8").astype(np.float64).reshape(K, H, 2)
        (inertia,) = struct.unpack("<d", f.read(8))
        _expect(f, SETTINGS_MAGIC)
        (n,) = struct.unpack("<q", f.read(8))
        settings = json.loads(f.read(n).decode("utf-8"))
        if f.read(1):
            raise ModelFormatError("trailing bytes after settings block")
    return Model(
        kind=settings["kind"],
        cfg=cfg,
        theta=theta,
        anchors=AnchorSet(A, inertia),
        sched=NoiseSchedule.from_dict(settings["schedule"]),
        traj_scale=float(settings["traj_scale"]),
        n_steps=int(settings["n_steps"]),
        n_samples=int(settings["n_samples"]),
    )
