"""CSV and figure output.

Figures are rendered with the Agg backend straight to PNG files next to the
delimited data; float cells use repr so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import csv
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVEFIG_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def save_profile_figure(path, x, curves: Mapping[str, np.ndarray], *,
                        title: str = "", xlabel: str = "x", ylabel: str = "value",
                        band: Optional[tuple[np.ndarray, np.ndarray]] = None) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if band is not None:
        ax.fill_between(x, band[0], band[1], alpha=0.25, color="tab:blue", label="+/- std")
    for label, y in curves.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_spacetime_figure(path, times, values: np.ndarray, *, title: str = "",
                          ylabel: str = "node") -> None:
    """Heatmap of a (time, node) array."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    im = ax.imshow(
        values.T,
        aspect="auto",
        origin="lower",
        extent=(float(times[0]), float(times[-1]), 0, values.shape[1]),
        cmap="viridis",
    )
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_history_figure(path, series: Mapping[str, Sequence[float]], *,
                        title: str = "", xlabel: str = "iteration",
                        logy: bool = True) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, ys in series.items():
        xs = np.arange(len(ys))
        if logy:
            ax.semilogy(xs, np.maximum(np.asarray(ys, dtype=float), 1e-300), marker="o", ms=3, label=label)
        else:
            ax.plot(xs, ys, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_loglog_figure(path, x, series: Mapping[str, Sequence[float]], *,
                       title: str = "", xlabel: str = "dt",
                       annotations: Mapping[str, float] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, ys in series.items():
        note = ""
        if annotations and label in annotations:
            note = f" (slope {annotations[label]:.2f})"
        ax.loglog(x, ys, marker="o", label=label + note)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)


def save_histogram_figure(path, data: Sequence[float], bins: int = 10, *,
                          title: str = "", xlabel: str = "value") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.hist(np.asarray(data, dtype=float), bins=bins, color="tab:blue", alpha=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)
