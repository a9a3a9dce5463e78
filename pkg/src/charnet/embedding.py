"""Document embeddings and cluster-separation scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import DataError
from .model import Model, extract_features
from .training import encode_dataset


@dataclass
class EmbeddingSet:
    """N document feature rows with optional labels and stable ids."""

    matrix: np.ndarray              # [N, F]
    labels: list[int] | None        # label id per row, or None
    ids: list[str]

    def __post_init__(self):
        n = len(self.matrix)
        if self.labels is not None and len(self.labels) != n:
            raise DataError(f"{len(self.labels)} labels for {n} rows")
        if len(self.ids) != n:
            raise DataError(f"{len(self.ids)} ids for {n} rows")
        if not np.isfinite(self.matrix).all():
            raise DataError("embedding matrix contains non-finite values")

    def __len__(self) -> int:
        return len(self.matrix)


def extract_embeddings(model: Model, documents: LabeledDataset | list[str],
                       ids: list[str] | None = None) -> EmbeddingSet:
    """Penultimate-layer features of every document, in eval mode."""
    if isinstance(documents, LabeledDataset):
        grids, targets = encode_dataset(model, documents)
        labels = [int(np.argmax(t)) if t.any() else -1 for t in targets]
    else:
        enc = model.spec.encoding
        grids = np.stack([model.encode_text(t) for t in documents]) if documents \
            else np.zeros((0, enc.max_sentences, enc.max_chars), dtype=np.int16)
        labels = None
    matrix = extract_features(model, grids)
    if ids is None:
        ids = [str(i) for i in range(len(matrix))]
    return EmbeddingSet(matrix, labels, ids)


def silhouette(points: np.ndarray, labels) -> float:
    """Mean silhouette score with Euclidean distance: per point,
    (b - a) / max(a, b) where a is the mean distance to its own cluster
    and b the smallest mean distance to another cluster. Points in
    singleton clusters score 0, as do coincident degenerate points."""
    x = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise DataError("points must be [N, D] with one label per row")
    n = len(x)
    if n < 3:
        raise DataError(f"silhouette needs at least 3 points, got {n}")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("silhouette needs at least 2 classes")

    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    scores = np.zeros(n)
    masks = {c: y == c for c in classes}
    sizes = {c: int(masks[c].sum()) for c in classes}
    for i in range(n):
        own = y[i]
        if sizes[own] == 1:
            continue  # singleton cluster scores 0
        a = dist[i, masks[own]].sum() / (sizes[own] - 1)
        b = min(dist[i, masks[c]].mean() for c in classes if c != own)
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())
