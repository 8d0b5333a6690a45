"""Matplotlib figures for benchmark reports (Agg backend, PNG output)."""
from __future__ import annotations

from os import PathLike
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .raster_io import ScalarField  # noqa: E402

TITLES = {
    "gridmap": "Grid map",
    "quadtree": "Quadtree",
    "wedgelet": "Wedgelet",
    "bsp-lse": "BSP LSE",
    "bsp-region": "BSP Region",
    "hexmap": "Hexagon",
}

# fixed metadata keeps reruns byte-stable
_PNG_META = {"Software": None}


def _style():
    return plt.rc_context({
        "font.size": 9,
        "axes.titlesize": 10,
        "axes.labelsize": 9,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "figure.dpi": 100,
    })


def render_panel(fields: Mapping[str, ScalarField], path: PathLike, title: str = "", cmap: str = "viridis") -> None:
    """Grid of rendered fields sharing one colour scale (0 to 1)."""
    names = list(fields)
    ncols = min(3, len(names))
    nrows = -(-len(names) // ncols)
    with _style():
        fig, axes = plt.subplots(nrows, ncols, figsize=(3.4 * ncols, 2.9 * nrows), squeeze=False)
        im = None
        for ax, name in zip(axes.ravel(), names):
            im = ax.imshow(fields[name].values, cmap=cmap, vmin=0.0, vmax=1.0, interpolation="nearest")
            ax.set_title(TITLES.get(name, name))
            ax.set_xticks([])
            ax.set_yticks([])
        for ax in axes.ravel()[len(names):]:
            ax.axis("off")
        if im is not None:
            fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.8, label="weed coverage")
        if title:
            fig.suptitle(title)
        fig.savefig(path, format="png", metadata=_PNG_META)
        plt.close(fig)


def metric_chart(summary: Mapping[str, Mapping[str, tuple[float, float]]], kinds: Sequence[str], path: PathLike,
                 title: str = "") -> None:
    """Bar chart of mean and std per representation, one panel per metric.

    ``summary[metric][kind]`` is a ``(mean, std)`` pair.
    """
    metrics = list(summary)
    x = np.arange(len(kinds))
    with _style():
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.6 * len(metrics), 3.0), squeeze=False)
        for ax, metric in zip(axes[0], metrics):
            means = [summary[metric][k][0] for k in kinds]
            stds = [summary[metric][k][1] for k in kinds]
            ax.bar(x, means, yerr=stds, color="0.55", edgecolor="0.2", capsize=3)
            ax.set_xticks(x)
            ax.set_xticklabels([TITLES.get(k, k) for k in kinds], rotation=35, ha="right")
            ax.set_title(metric)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="png", metadata=_PNG_META)
        plt.close(fig)
