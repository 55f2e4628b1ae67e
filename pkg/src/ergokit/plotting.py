"""Matplotlib figure writers with reproducible SVG/PNG output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "ergokit", "svg.fonttype": "none", "figure.dpi": 100}
_META = {"svg": {"Date": None, "Creator": None}, "png": {"Software": None}}


def save(fig, path: Path, fmt: str) -> Path:
    path = Path(path).with_suffix("." + fmt)
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format=fmt, metadata=_META.get(fmt))
    plt.close(fig)
    return path


def heatmap(x, y, Z, xlabel: str, ylabel: str, title: str, cmap: str = "viridis", diverging: bool = False):
    """Z has shape (len(y), len(x))."""
    fig, ax = plt.subplots(figsize=(5, 4))
    Z = np.asarray(Z, dtype=float)
    kw = {}
    if diverging:
        m = float(np.nanmax(np.abs(Z))) or 1.0
        kw = {"vmin": -m, "vmax": m}
        cmap = "RdBu_r"
    mesh = ax.pcolormesh(x, y, Z, shading="nearest", cmap=cmap, **kw)
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def lines(x, series: dict, xlabel: str, ylabel: str, title: str, markers: bool = False):
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, ys in series.items():
        ax.plot(x, ys, marker="o" if markers else None, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig
