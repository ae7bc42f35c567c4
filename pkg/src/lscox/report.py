"""Figure rendering for run directories.

Every CLI subcommand that writes delimited output also drops matching
PNG figures next to it, rendered off-screen. Figures are a convenience
view of the CSV content, never the only copy of a result.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .lattice import Lattice, PointPattern


def save_pattern_figure(path, pattern: PointPattern,
                        window: tuple[float, float], title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 6 * window[1] / window[0]))
    ax.scatter(pattern.x, pattern.y, s=4, c="black")
    ax.set_xlim(0, window[0])
    ax.set_ylim(0, window[1])
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_raster_figure(path, values: np.ndarray, lattice: Lattice,
                       title: str, cmap: str = "viridis") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    im = ax.imshow(values, origin="lower", cmap=cmap,
                   extent=(0, lattice.window_width, 0, lattice.window_height))
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_curve_figure(path, r: np.ndarray, curves: dict, title: str,
                      band: tuple[np.ndarray, np.ndarray] | None = None) -> None:
    """Line plot of named curves over distance, optionally with a shaded
    band (lo, hi)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    if band is not None:
        ax.fill_between(r, band[0], band[1], color="0.85", label="band")
    for name, values in curves.items():
        ax.plot(r, values, label=name)
    ax.set_xlabel("r")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trace_figure(path, names: list, theta: np.ndarray, title: str) -> None:
    """Trace panel per parameter from a (n_draws, n_params) array."""
    n = len(names)
    if n == 0:
        return
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 2.2 * rows),
                             squeeze=False)
    for j, name in enumerate(names):
        ax = axes[j // cols][j % cols]
        ax.plot(theta[:, j], lw=0.7)
        ax.set_title(name, fontsize=9)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
