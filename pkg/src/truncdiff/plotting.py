"""SVG figures for planned scenes and evaluation reports.

Output is byte-deterministic: the SVG hash salt is pinned, the date
metadata is dropped and the XML prolog is stripped so files start at the
``<svg`` root. In scene plots every candidate trajectory is wrapped in a
``<g id="candidate-<k>">`` group, one per anchor or sample.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from .policy import PlanResult  # noqa: E402
from .world import Scene  # noqa: E402

CANDIDATE_ID = "candidate-{}"
_RC = {"svg.hashsalt": "truncdiff", "svg.fonttype": "none", "font.size": 9}


def _save_svg(fig, path) -> None:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    text = buf.getvalue()
    text = text[text.index("<svg") :]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def plot_scene(scene: Scene, result: PlanResult, path, title: str | None = None) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 4))
        for poly in scene.corridors:
            ax.plot(poly[:, 0], poly[:, 1], color="0.6", lw=0.8, ls=":")
            normal = np.gradient(poly, axis=0)[:, ::-1] * [-1, 1]
            normal /= np.linalg.norm(normal, axis=1, keepdims=True)
            for side in (-1, 1):
                edge = poly + side * scene.half_width * normal
                ax.plot(edge[:, 0], edge[:, 1], color="0.3", lw=0.8)
        for o in scene.obstacles:
            ax.add_patch(Circle(o.center, o.radius, color="tab:red", alpha=0.6))
            ax.annotate("", xy=np.add(o.center, o.velocity), xytext=o.center,
                        arrowprops=dict(arrowstyle="->", color="tab:red", lw=0.8))
        for mode in scene.gt_modes:
            ax.plot(mode[:, 0], mode[:, 1], color="k", ls="--", lw=1.2)
        cmap = plt.get_cmap("viridis")
        for k, (cand, score) in enumerate(zip(result.candidates, result.scores)):
            chosen = k == result.chosen
            ax.plot(
                cand[:, 0], cand[:, 1], marker=".", ms=3,
                color=cmap(float(score)), alpha=float(np.clip(score, 0.0, 1.0)),
                lw=3.0 if chosen else 1.0, zorder=3 if chosen else 2,
                gid=CANDIDATE_ID.format(k),
            )
        ax.plot([0], [0], marker="s", color="tab:blue", ms=6)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(title or f"{scene.kind} scene, seed {scene.seed}")
        fig.tight_layout()
        _save_svg(fig, path)


def plot_report(report, path) -> None:
    """Grouped bars of the quality metrics for every method."""
    metrics = [("pdms", "mini-PDMS"), ("min_ade", "minADE [m]"), ("mode_coverage", "coverage"), ("diversity", "diversity [m]")]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(metrics), figsize=(10, 2.8))
        for ax, (attr, label) in zip(axes, metrics):
            names = [f"{m.name}\n{m.n_denoise_steps} steps" for m in report.methods]
            values = [getattr(m, attr) for m in report.methods]
            ax.bar(names, values, color=["tab:blue", "tab:orange"][: len(values)])
            ax.set_title(label)
            for i, v in enumerate(values):
                ax.text(i, v, f"{v:.3f}", ha="center", va="bottom")
        fig.tight_layout()
        _save_svg(fig, path)
