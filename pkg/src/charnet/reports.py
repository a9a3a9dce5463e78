"""Run artifacts: delimited output and the matplotlib figures rendered
alongside it.

Every figure goes to SVG so the files are diffable and structurally
inspectable; scatter series and the legend carry stable SVG group ids.
The SVG hash salt is pinned so identical inputs render identical files.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "charnet"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .embedding import EmbeddingSet  # noqa: E402
from .metrics import Metrics  # noqa: E402
from .training import TrainingHistory  # noqa: E402


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".9g")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# delimited output

def write_history_csv(history: TrainingHistory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for row in history.rows:
            w.writerow([row.epoch, _fmt(row.train_loss), _fmt(row.train_accuracy),
                        _fmt(row.val_loss), _fmt(row.val_accuracy)])


def write_metrics_csv(metrics: Metrics, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "tp", "fp", "fn", "tn", "precision", "recall", "f1"])
        for m in metrics.per_class:
            w.writerow([m.label, m.tp, m.fp, m.fn, m.tn,
                        _fmt(m.precision), _fmt(m.recall), _fmt(m.f1)])
        w.writerow(["__overall__", "", "", "", "",
                    _fmt(metrics.binary_accuracy), _fmt(metrics.macro_f1),
                    _fmt(metrics.auc)])


def format_metrics_text(metrics: Metrics) -> str:
    lines = [f"binary accuracy @ {metrics.threshold:g}: "
             f"{metrics.binary_accuracy:.4f}",
             f"macro F1: {metrics.macro_f1:.4f}",
             f"micro AUC: {metrics.auc:.4f}" if np.isfinite(metrics.auc)
             else "micro AUC: undefined (single-class pool)"]
    for m in metrics.per_class:
        lines.append(f"  {m.label}: precision {m.precision:.4f} "
                     f"recall {m.recall:.4f} f1 {m.f1:.4f} "
                     f"(tp={m.tp} fp={m.fp} fn={m.fn} tn={m.tn})")
    return "\n".join(lines) + "\n"


def write_roc_csv(points: list[tuple[float, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in points:
            w.writerow([_fmt(fpr), _fmt(tpr)])


def write_embeddings_csv(embeddings: EmbeddingSet, label_names: list[str], path) -> None:
    dim = embeddings.matrix.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"f{i}" for i in range(dim)])
        for i, row in enumerate(embeddings.matrix):
            label = ""
            if embeddings.labels is not None and embeddings.labels[i] >= 0:
                lid = embeddings.labels[i]
                label = label_names[lid] if lid < len(label_names) else str(lid)
            w.writerow([embeddings.ids[i], label] + [_fmt(v) for v in row])


def write_coords_csv(ids: list[str], coords: np.ndarray,
                     labels: list[str] | None, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "label"])
        for i, (x, y) in enumerate(coords):
            w.writerow([ids[i], _fmt(x), _fmt(y),
                        labels[i] if labels is not None else ""])


# ---------------------------------------------------------------------------
# figures

def plot_convergence(history: TrainingHistory, path) -> None:
    """Loss and accuracy per epoch, train and (when present) validation."""
    epochs = [r.epoch for r in history.rows]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [r.train_loss for r in history.rows], label="train")
    ax_acc.plot(epochs, [r.train_accuracy for r in history.rows], label="train")
    if any(r.val_loss is not None for r in history.rows):
        ax_loss.plot(epochs, [r.val_loss for r in history.rows], label="validation")
        ax_acc.plot(epochs, [r.val_accuracy for r in history.rows],
                    label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("binary accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_roc(points: list[tuple[float, float]], auc: float, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    if points:
        fpr, tpr = zip(*points)
        ax.plot(fpr, tpr, label=f"AUC = {auc:.4f}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def plot_scatter(coords: np.ndarray, labels: list[str] | None, path) -> None:
    """2-d scatter, one color and one legend entry per label. Each series
    gets SVG group id "points-<label>"; unlabeled input draws a single
    uncolored series and no legend."""
    fig, ax = plt.subplots(figsize=(6, 6))
    coords = np.asarray(coords)
    if labels is None:
        ax.scatter(coords[:, 0], coords[:, 1], s=12, gid="points-all")
    else:
        seen = list(dict.fromkeys(labels))
        for name in seen:
            rows = [i for i, l in enumerate(labels) if l == name]
            ax.scatter(coords[rows, 0], coords[rows, 1], s=12, label=str(name),
                       gid=f"points-{name}")
        legend = ax.legend()
        legend.set_gid("legend")
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    fig.tight_layout()
    _save(fig, path)
