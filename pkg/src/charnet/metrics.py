"""Classification metrics: thresholded confusion counts, precision /
recall / F1 per class, binary accuracy, ROC curve and AUC.

"Binary accuracy" is the mean over every (item, class) pair of the
indicator that the thresholded probability matches the target. This is
the micro reading that lets a multi-class model report one accuracy
number; per-class precision/recall/F1 and their unweighted macro mean
are reported alongside so either averaging convention can be compared.

The ROC in a Metrics object pools (item, class) pairs the same way
(one-vs-rest, micro). `roc_auc` itself is the plain binary operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import DataError
from .model import Model, predict_probs
from .training import encode_dataset


@dataclass
class ClassMetrics:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


@dataclass
class Metrics:
    binary_accuracy: float
    per_class: list[ClassMetrics]
    macro_f1: float
    roc_points: list[tuple[float, float]]
    auc: float
    threshold: float


def _safe_div(num: float, denom: float) -> float:
    return num / denom if denom else 0.0


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean, 0 when both are 0."""
    return _safe_div(2 * precision * recall, precision + recall)


def confusion_metrics(label: str, tp: int, fp: int, fn: int, tn: int) -> ClassMetrics:
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    return ClassMetrics(label, tp, fp, fn, tn, p, r, f1_score(p, r))


def metrics_from_scores(scores: np.ndarray, targets: np.ndarray,
                        labels: list[str], threshold: float = 0.5) -> Metrics:
    """Metrics for a score matrix [N, K] against multi-hot targets."""
    if not 0 < threshold < 1:
        raise DataError(f"threshold must be in (0, 1), got {threshold}")
    if scores.shape != targets.shape:
        raise DataError(f"scores {scores.shape} vs targets {targets.shape}")
    if scores.size == 0:
        raise DataError("empty dataset")
    decisions = scores >= threshold
    truth = targets >= 0.5
    binary_accuracy = float((decisions == truth).mean())

    per_class = []
    for c in range(scores.shape[1]):
        d, t = decisions[:, c], truth[:, c]
        per_class.append(confusion_metrics(
            labels[c] if c < len(labels) else f"class{c}",
            tp=int((d & t).sum()), fp=int((d & ~t).sum()),
            fn=int((~d & t).sum()), tn=int((~d & ~t).sum())))
    macro_f1 = float(np.mean([m.f1 for m in per_class]))

    flat_scores = scores.reshape(-1)
    flat_truth = truth.reshape(-1).astype(int)
    if 0 < flat_truth.sum() < flat_truth.size:
        roc_points, auc = roc_auc(flat_scores, flat_truth)
    else:  # degenerate pool: every pair positive or every pair negative
        roc_points, auc = [], float("nan")
    return Metrics(binary_accuracy, per_class, macro_f1, roc_points, auc, threshold)


def evaluate(model: Model, dataset: LabeledDataset,
             threshold: float = 0.5) -> Metrics:
    """Eval-mode metrics of a model over a labeled dataset."""
    if len(dataset) == 0:
        raise DataError("empty dataset")
    grids, targets = encode_dataset(model, dataset)
    scores = predict_probs(model, grids)
    labels = model.label_vocab or dataset.label_vocab
    return metrics_from_scores(scores, targets, labels, threshold)


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points (fpr, tpr) from a sweep over the distinct scores, and
    the area under them by trapezoid. Ties share a threshold, which makes
    the trapezoidal area equal the Mann-Whitney pair statistic (ties
    counting one half)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise DataError(f"scores and labels must be equal-length vectors, "
                        f"got {s.shape} and {y.shape}")
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos + neg != y.size:
        raise DataError("labels must be 0 or 1")
    if pos == 0 or neg == 0:
        raise DataError("ROC needs at least one positive and one negative label")

    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_y = y[order]
    tps = np.cumsum(sorted_y == 1)
    fps = np.cumsum(sorted_y == 0)
    # keep only the last index of each tied score group
    distinct = np.nonzero(np.diff(sorted_scores, append=np.nan))[0]
    tpr = np.concatenate([[0.0], tps[distinct] / pos])
    fpr = np.concatenate([[0.0], fps[distinct] / neg])
    auc = float(np.trapezoid(tpr, fpr))
    return list(zip(fpr.tolist(), tpr.tolist())), auc
