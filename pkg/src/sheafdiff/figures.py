"""Figure rendering for the report paths.

Every function takes already-computed results and a target path, draws
one figure with the Agg backend, and returns the path it wrote.  Nothing
here computes; the CLI computes, then hands the numbers over.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_energy_trace",
    "plot_training_history",
    "plot_grid_summary",
    "plot_depth_ablation",
]


def plot_energy_trace(
    trace, path: str | Path, title: str = "Dirichlet energy under diffusion"
) -> Path:
    """Energy per step on a log axis; zeros are clipped to the float floor
    so a fully collapsed signal still draws."""
    path = Path(path)
    steps = [s for s, _ in trace]
    energies = [max(e, 1e-300) for _, e in trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(steps, energies, marker="o", markersize=3, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("energy")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_training_history(history, path: str | Path) -> Path:
    """Loss components and validation accuracy over epochs.

    ``history`` is a sequence of epoch records carrying a loss breakdown
    plus val_loss and val_acc; non-finite rows are dropped from the
    curves but still advance the x axis.
    """
    path = Path(path)
    epochs = np.array([r.epoch for r in history])
    task = np.array([r.breakdown.task for r in history])
    total = np.array([r.breakdown.total for r in history])
    val_loss = np.array([r.val_loss for r in history])
    val_acc = np.array([r.val_acc for r in history])

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    for series, label in ((task, "train task"), (total, "train total"),
                          (val_loss, "val task")):
        keep = np.isfinite(series)
        ax1.plot(epochs[keep], series[keep], lw=1.0, label=label)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)

    keep = np.isfinite(val_acc)
    ax2.plot(epochs[keep], val_acc[keep], lw=1.0, color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation accuracy")
    ax2.set_ylim(0.0, 1.05)
    ax2.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_grid_summary(aggregates, path: str | Path) -> Path:
    """Mean test accuracy with std bars, one bar per configuration."""
    path = Path(path)
    labels = [f"{a.arch}\n{a.regularizer}" for a in aggregates]
    means = [100.0 * a.mean_test for a in aggregates]
    stds = [100.0 * a.std_test for a in aggregates]
    x = np.arange(len(labels))

    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(labels)), 4.0))
    ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue", alpha=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("test accuracy (%)")
    ax.set_ylim(0.0, 100.0)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_depth_ablation(rows, path: str | Path) -> Path:
    """Accuracy versus diffusion depth; halted cells annotate their row."""
    path = Path(path)
    depths = [r.depth for r in rows]
    means = [100.0 * r.mean_test for r in rows]
    stds = [100.0 * r.std_test for r in rows]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(depths, means, yerr=stds, marker="o", capsize=3, lw=1.2)
    for r, m in zip(rows, means):
        if r.halt_count:
            ax.annotate(
                f"{r.halt_count} halted",
                (r.depth, m),
                textcoords="offset points",
                xytext=(4, -12),
                fontsize=7,
                color="tab:red",
            )
    ax.set_xscale("log", base=2)
    ax.set_xticks(depths)
    ax.get_xaxis().set_major_formatter(plt.ScalarFormatter())
    ax.set_xlabel("diffusion depth")
    ax.set_ylabel("test accuracy (%)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
