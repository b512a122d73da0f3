"""Static top-down scene/plan renderings (vector output)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geometry import obb_corners


def _draw_box(ax, box, color, alpha=0.8):
    corners = obb_corners(*box)
    ax.fill(corners[:, 0], corners[:, 1], color=color, alpha=alpha, edgecolor="black", lw=0.5)


def plot_scene(scene, plan_output=None, path=None, top_intents=3, top_modes=3, title=None):
    """BEV top-down: map, agents, expert future, and the dual-level hypotheses.

    The expert trajectory is drawn green; the best-mode trajectories of the
    top-k intents in blue; the top-m mode trajectories of the best intent in
    red/orange dashes.
    """
    fig, ax = plt.subplots(figsize=(7, 5))
    for poly in scene.polylines:
        pts = poly.points
        if poly.kind == "lane_center":
            ax.plot(pts[:, 0], pts[:, 1], color="0.7", ls="--", lw=1.0)
        else:
            ax.plot(pts[:, 0], pts[:, 1], color="0.2", lw=1.4)
    for agent in scene.agents:
        cur = agent.current
        color = "steelblue" if agent.cls == "vehicle" else "darkorange"
        _draw_box(ax, [cur[0], cur[1], cur[2], agent.extent[0], agent.extent[1]], color, 0.5)
        fut = agent.future
        ax.plot(fut[:, 0], fut[:, 1], color=color, lw=0.8, alpha=0.6)
    _draw_box(ax, [0.0, 0.0, 0.0, 4.1, 1.8], "black", 0.7)
    gt = np.vstack([[0, 0], scene.ego_gt])
    ax.plot(gt[:, 0], gt[:, 1], color="green", lw=2.0, marker="o", ms=3, label="expert")
    if plan_output is not None:
        order = np.argsort(-plan_output.intent_logits)
        for rank, k in enumerate(order[:top_intents]):
            m = int(np.argmax(plan_output.mode_logits[k]))
            traj = np.vstack([[0, 0], plan_output.trajectories[k, m]])
            ax.plot(traj[:, 0], traj[:, 1], color="royalblue", lw=1.4,
                    alpha=1.0 - 0.25 * rank,
                    label="top intents" if rank == 0 else None)
        best_k = int(order[0])
        mode_order = np.argsort(-plan_output.mode_logits[best_k])
        colors = ["red", "orangered", "orange", "gold"]
        for rank, m in enumerate(mode_order[:top_modes]):
            traj = np.vstack([[0, 0], plan_output.trajectories[best_k, m]])
            ax.plot(traj[:, 0], traj[:, 1], color=colors[rank % len(colors)], lw=1.2,
                    ls="--", label="modes of best intent" if rank == 0 else None)
    ax.set_aspect("equal")
    ax.set_xlim(-12, 40)
    ax.set_ylim(-12, 12)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="upper right", fontsize=7)
    ax.set_title(title or scene.id)
    fig.tight_layout()
    if path:
        fig.savefig(path)
        plt.close(fig)
        return path
    return fig
