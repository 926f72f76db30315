"""Figure rendering for run reports. Headless backend, files only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_learning_curve(
    path: str | Path,
    env_steps: np.ndarray,
    mean_return: np.ndarray,
    sd_return: np.ndarray | None = None,
    title: str = "training returns",
    label: str = "mean return",
) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(env_steps, mean_return, lw=1.2, color="tab:blue", label=label)
    if sd_return is not None:
        ax.fill_between(
            env_steps,
            mean_return - sd_return,
            mean_return + sd_return,
            alpha=0.25,
            color="tab:blue",
            lw=0,
        )
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode return")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _masked_grid(values: np.ndarray, walls: np.ndarray) -> np.ma.MaskedArray:
    return np.ma.masked_where(walls | ~np.isfinite(values), values.astype(np.float64))


def save_heatmap(path: str | Path, counts: np.ndarray, walls: np.ndarray) -> None:
    """Per-agent visitation panels plus a pooled panel. counts [n, H, W]."""
    n_agents = counts.shape[0]
    fig, axes = plt.subplots(1, n_agents + 1, figsize=(3 * (n_agents + 1), 3.2))
    panels = [(f"agent {i}", counts[i]) for i in range(n_agents)]
    panels.append(("all agents", counts.sum(axis=0)))
    for ax, (name, grid) in zip(axes, panels):
        ax.set_facecolor("black")
        im = ax.imshow(_masked_grid(grid, walls), cmap="viridis", interpolation="nearest")
        ax.set_title(name, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle("visitation counts")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sd_map(path: str | Path, per_cell_mean: np.ndarray, walls: np.ndarray) -> None:
    """Spatial mean of the individual/shared SD ratio; unvisited cells are blank."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.set_facecolor("black")
    im = ax.imshow(_masked_grid(per_cell_mean, walls), cmap="magma", interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title("individual/shared value SD ratio")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
