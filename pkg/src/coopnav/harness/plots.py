"""PNG figures for episode reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..world import World  # noqa: E402


def trajectories(world: World, trails, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 6 * world.shape[0] / max(world.shape[1], 1) + 0.5))
    ax.imshow(world.walls, cmap="Greys", origin="upper", interpolation="nearest")
    for obj in world.objects:
        marker = "*" if obj.cls in world.targets.classes else "."
        ax.plot(obj.cell[0], obj.cell[1], marker, color="tab:red" if marker == "*" else "tab:gray", markersize=9)
        ax.annotate(obj.cls, obj.cell, fontsize=6, xytext=(2, 2), textcoords="offset points")
    for i, cells in sorted(trails.items()):
        if not cells:
            continue
        xs, ys = zip(*cells)
        ax.plot(xs, ys, "-", linewidth=1.5, alpha=0.8, label=f"agent {i}")
        ax.plot(xs[0], ys[0], "o", color=ax.lines[-1].get_color())
    ax.set_title(f"{world.name}: agent trajectories")
    ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.01, 1.0))
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def economy(curve, path: str | Path) -> Path:
    """Cumulative protocol messages against the all-to-all baseline."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if curve:
        ticks, sent, base = zip(*curve)
        ax.step(ticks, sent, where="post", label="protocol messages")
        ax.step(ticks, base, where="post", label="broadcast baseline")
    ax.set_xlabel("tick")
    ax.set_ylabel("messages (cumulative)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)
