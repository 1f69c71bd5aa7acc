"""Static figures: scan-order arrow diagrams and kernel heatmaps."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scan import PathListing


def render_scan_figure(listing: PathListing, path):
    """Arrow diagram of every region's primary scan direction."""
    fig, ax = plt.subplots(figsize=(max(4, listing.grid_w * 0.7),
                                    max(4, listing.grid_h * 0.7)))
    cmap = plt.get_cmap("tab10")
    for k, scan_path in enumerate(listing.paths):
        color = cmap(k % 10)
        order = scan_path.order
        ys = [r for r, _ in order]
        xs = [c for _, c in order]
        ax.scatter(xs, ys, s=36, color=color, zorder=3)
        for (y0, x0), (y1, x1) in zip(order, order[1:]):
            ax.annotate("", xy=(x1, y1), xytext=(x0, y0),
                        arrowprops=dict(arrowstyle="->", color=color, lw=1.4))
        ax.annotate(str(k), xy=(xs[0], ys[0]), fontsize=8, color=color,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlim(-0.8, listing.grid_w - 0.2)
    ax.set_ylim(listing.grid_h - 0.2, -0.8)
    ax.set_xticks(range(listing.grid_w))
    ax.set_yticks(range(listing.grid_h))
    ax.grid(True, lw=0.3, alpha=0.4)
    ax.set_aspect("equal")
    ax.set_title(f"{listing.strategy.value} scan, {listing.grid_h}x{listing.grid_w} grid, "
                 f"regions of {listing.region_size}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_kernel_heatmap(cells, weights, region_size, path, title="effective kernel"):
    grid = np.full((region_size, region_size), np.nan)
    for (r, c), w in zip(cells, weights):
        grid[r, c] = w
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(grid, cmap="viridis")
    for (r, c), w in zip(cells, weights):
        ax.text(c, r, f"{w:.3f}", ha="center", va="center",
                color="white" if w < np.nanmax(grid) * 0.6 else "black", fontsize=9)
    ax.set_xticks(range(region_size))
    ax.set_yticks(range(region_size))
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_loss_curve(rows, path):
    steps = [r["step"] for r in rows]
    totals = [r["total"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, totals, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
