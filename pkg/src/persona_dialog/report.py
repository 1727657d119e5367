"""Optional figures for the CLI report path. Needs matplotlib; the core does not."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_dev_curve(curve, path) -> Path:
    """Dev accuracy and training loss per epoch, written as a PNG."""
    plt = _pyplot()
    epochs = [r.epoch for r in curve]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, [r.dev_accuracy for r in curve], color="tab:blue", label="dev accuracy")
    ax.set_xlabel("epoch")
    ax.set_ylabel("dev accuracy (%)")
    ax.set_ylim(0, 100)
    twin = ax.twinx()
    twin.plot(epochs, [r.train_loss for r in curve], color="tab:gray", alpha=0.6, label="train loss")
    twin.set_ylabel("train loss")
    twin.set_yscale("log")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_attention(table, path) -> Path:
    """Heatmap of per-hop attention, one row per memory entry."""
    plt = _pyplot()
    weights = np.array([r.weights for r in table.rows], dtype=float).reshape(len(table.rows), table.hops)
    labels = [f"{r.block[0]} {r.time} {r.text}"[:60] for r in table.rows]
    fig, ax = plt.subplots(figsize=(2 + 1.2 * table.hops, 0.6 + 0.22 * len(labels)))
    ax.imshow(weights, aspect="auto", cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=6)
    ax.set_xticks(range(table.hops))
    ax.set_xticklabels([f"hop {k + 1}" for k in range(table.hops)], fontsize=7)
    ax.set_title(f"predicted: {table.predicted}"[:70], fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
