"""Figures written next to the delimited reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def fold_figure(report, path) -> Path:
    """Per-fold accuracy bars with the fold loss overlaid."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        idx = np.array([f.fold_index for f in report.folds])
        acc = np.array([f.accuracy for f in report.folds])
        loss = np.array([f.loss for f in report.folds])
        ax.bar(idx, acc, color="#4c72b0", width=0.6, label="accuracy")
        ax.axhline(report.average_accuracy, color="#4c72b0", ls="--", lw=1,
                   label=f"mean accuracy {report.average_accuracy:.4f}")
        ax.set_xlabel("fold")
        ax.set_ylabel("accuracy")
        ax.set_ylim(min(0.5, acc.min() - 0.05), 1.0)
        ax.set_xticks(idx)
        ax2 = ax.twinx()
        ax2.plot(idx, loss, "o-", color="#dd8452", lw=1, ms=3, label="loss")
        ax2.set_ylabel("loss")
        ax2.spines["right"].set_visible(True)
        handles = ax.get_legend_handles_labels()
        handles2 = ax2.get_legend_handles_labels()
        ax.legend(handles[0] + handles2[0], handles[1] + handles2[1], loc="lower right")
        ax.set_title(f"{report.task} model, {report.k}-fold cross-validation")
        return _save(fig, path)


def loss_curve_figure(report, path) -> Path:
    """Mean training loss per epoch, one line per fold."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        for f in report.folds:
            if f.epoch_losses:
                ax.plot(np.arange(1, len(f.epoch_losses) + 1), f.epoch_losses, lw=1,
                        alpha=0.8, label=f"fold {f.fold_index}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        if len(report.folds) <= 10:
            ax.legend(ncol=2)
        return _save(fig, path)


def prediction_figure(table, path) -> Path:
    """Histogram of predicted-class probabilities, split by hit and miss when known."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        probs = np.array([r.probability for r in table.rows])
        bins = np.linspace(0.0, 1.0, 21)
        if table.has_truth:
            hit = np.array([bool(r.hit) for r in table.rows], dtype=bool)
            ax.hist([probs[hit], probs[~hit]], bins=bins, stacked=True,
                    color=["#55a868", "#c44e52"], label=["hit", "miss"])
            ax.legend()
        else:
            ax.hist(probs, bins=bins, color="#4c72b0")
        ax.set_xlabel("predicted-class probability")
        ax.set_ylabel("rows")
        return _save(fig, path)
