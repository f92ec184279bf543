"""Matplotlib figures written next to the JSON reports.

Uses the non-interactive Agg backend; every function saves one PNG and
closes its figure.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .warp import WarpMatrix  # noqa: E402

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.titlesize": 10,
        "savefig.dpi": 120,
        "savefig.bbox": "tight",
        "image.interpolation": "nearest",
    }
)


def plot_kernels(kernels: dict[str, np.ndarray], path: str | Path) -> Path:
    """Side-by-side heat maps sharing one colour scale."""
    vmax = max(float(np.abs(k).max()) for k in kernels.values())
    fig, axes = plt.subplots(1, len(kernels), figsize=(3 * len(kernels), 3), squeeze=False)
    for ax, (title, k) in zip(axes[0], kernels.items()):
        im = ax.imshow(k, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.set_title(f"{title} ({k.shape[0]}x{k.shape[1]})")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=list(axes[0]), shrink=0.8)
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_warp_grid(
    warp: WarpMatrix,
    shape: tuple[int, int],
    path: str | Path,
    reference: WarpMatrix | None = None,
    lines: int = 11,
    exaggerate: float = 10.0,
) -> Path:
    """Regular grid (grey) and its warped image (black), displacements exaggerated."""
    m, n = shape
    fig, ax = plt.subplots(figsize=(5, 5 * m / n))
    t = np.linspace(0, 1, 200)

    def draw(w, style, color, label):
        first = True
        for frac in np.linspace(0, 1, lines):
            for ii, jj in ((np.full_like(t, frac * (m - 1)), t * (n - 1)), (t * (m - 1), np.full_like(t, frac * (n - 1)))):
                y, x = w.map_pixels(ii, jj, shape)
                y = ii + exaggerate * (y - ii)
                x = jj + exaggerate * (x - jj)
                ax.plot(x, y, style, color=color, lw=0.8, label=label if first else None)
                first = False

    draw(WarpMatrix.identity(warp.degree), "-", "0.75", "identity")
    draw(warp, "-", "k", "estimated")
    if reference is not None:
        draw(reference, "--", "tab:red", "true")
    ax.set_xlim(-0.05 * n, 1.05 * n)
    ax.set_ylim(1.05 * m, -0.05 * m)
    ax.set_aspect("equal")
    ax.set_title(f"warp grid (displacement x{exaggerate:g})")
    ax.legend(loc="upper right", fontsize=7)
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_degree_sweep(degrees, losses, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(list(degrees), list(losses), "o-")
    ax.set_xlabel("polynomial degree")
    ax.set_ylabel("centred MSE after warping")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_images(images: dict[str, np.ndarray], path: str | Path) -> Path:
    fig, axes = plt.subplots(1, len(images), figsize=(3 * len(images), 3.2), squeeze=False)
    for ax, (title, img) in zip(axes[0], images.items()):
        ax.imshow(np.clip(img, 0, 1), cmap="gray", vmin=0, vmax=1)
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path
