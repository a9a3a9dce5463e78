"""Mini-batch Adam training for the coupled networks.

The loop is deterministic for a fixed seed in single-threaded mode:
shuffling, dropout masks, and weight updates all derive from the run
seed, and gradient reduction order is fixed. History rows are appended
once per completed epoch with eval-mode loss/accuracy over the full
train (and optional validation) sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import LabeledDataset
from .encoding import document_indices, one_hot
from .errors import DataError, NumericError, ShapeError
from .model import Model
from .rng import RngStream
from .tensor import Tape, Tensor


@dataclass
class Hyperparams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    head: str | None = None  # None: use the model's head
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.head not in (None, "sigmoid", "softmax"):
            raise ValueError(f"head must be sigmoid or softmax, got {self.head!r}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1 when set")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None
    val_accuracy: float | None


@dataclass
class TrainingHistory:
    rows: list[EpochStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


def loss(probs: Tensor, targets, head: str) -> Tensor:
    """Cross-entropy matching the head: per-element binary CE for a
    sigmoid head, categorical CE for softmax. Probabilities are clamped
    to [1e-7, 1 - 1e-7] so the value is always finite."""
    if head == "sigmoid":
        return ops.bce_loss(probs, targets)
    if head == "softmax":
        return ops.cce_loss(probs, targets)
    raise ValueError(f"unknown head {head!r}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(m={n: np.zeros_like(p.data) for n, p in params.items()},
                   v={n: np.zeros_like(p.data) for n, p in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, hp: Hyperparams, t: int
              ) -> tuple[dict[str, Tensor], AdamState]:
    """Standard bias-corrected Adam update, applied in place to every
    block present in grads."""
    if t < 1:
        raise ValueError(f"step count must be >= 1, got {t}")
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"grad for {name}: {g.shape} vs {p.data.shape}")
        m = state.m[name] = hp.beta1 * state.m[name] + (1 - hp.beta1) * g
        v = state.v[name] = hp.beta2 * state.v[name] + (1 - hp.beta2) * g * g
        m_hat = m / (1 - hp.beta1 ** t)
        v_hat = v / (1 - hp.beta2 ** t)
        p.data -= (hp.learning_rate * m_hat / (np.sqrt(v_hat) + hp.epsilon)
                   ).astype(p.data.dtype)
    return params, state


def encode_dataset(model: Model, dataset: LabeledDataset
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Compact grids [N, S, C] plus multi-hot targets [N, K].

    When the model already has a label vocabulary, dataset labels map to
    target columns by name (datasets build their vocab in first-seen
    order, which need not match the model's)."""
    enc = model.spec.encoding
    k = model.spec.n_classes
    if model.label_vocab:
        model_index = {name: i for i, name in enumerate(model.label_vocab)}
        remap = {}
        for ds_id, name in enumerate(dataset.label_vocab):
            if name not in model_index:
                raise DataError(f"label {name!r} is not in the model "
                                f"vocabulary {model.label_vocab}")
            remap[ds_id] = model_index[name]
    else:
        remap = None
    grids = np.empty((len(dataset), enc.max_sentences, enc.max_chars),
                     dtype=np.int16)
    targets = np.zeros((len(dataset), k), dtype=np.float32)
    for i, (text, labels) in enumerate(dataset.records):
        grids[i] = document_indices(text, model.alphabet, enc)
        for lab in labels:
            lab = remap[lab] if remap is not None else lab
            if lab >= k:
                raise DataError(f"record {i}: label id {lab} does not fit "
                                f"a {k}-class model")
            targets[i, lab] = 1.0
    return grids, targets


def _eval_loss_accuracy(model: Model, grids: np.ndarray, targets: np.ndarray,
                        head: str, batch_size: int,
                        threshold: float = 0.5) -> tuple[float, float]:
    total_loss = 0.0
    matches = 0
    n = len(grids)
    for lo in range(0, n, batch_size):
        batch = one_hot(grids[lo:lo + batch_size])
        t = targets[lo:lo + batch_size]
        probs, _ = model.forward_documents(batch, "eval", None)
        batch_loss = loss(probs, t, head).item()
        total_loss += batch_loss * len(t)
        matches += int(((probs.data >= threshold) == (t >= 0.5)).sum())
    return total_loss / n, matches / (n * targets.shape[1])


def train(model: Model, train_set: LabeledDataset,
          val_set: LabeledDataset | None, hp: Hyperparams,
          frozen: frozenset[str] = frozenset(),
          ) -> tuple[Model, TrainingHistory]:
    """Seeded mini-batch Adam. Blocks named in `frozen` are excluded from
    updates. Raises NumericError on a non-finite loss."""
    if len(train_set) == 0:
        raise DataError("training set is empty")
    head = hp.head or model.spec.head
    if model.label_vocab == [] and train_set.label_vocab:
        if len(train_set.label_vocab) > model.spec.n_classes:
            raise DataError(
                f"{len(train_set.label_vocab)} labels do not fit a "
                f"{model.spec.n_classes}-class model")
        model.label_vocab = list(train_set.label_vocab)
    grids, targets = encode_dataset(model, train_set)
    val = (encode_dataset(model, val_set)
           if val_set is not None and len(val_set) else None)

    trainable = {n: p for n, p in model.weights.items() if n not in frozen}
    state = AdamState.for_params(trainable)
    shuffle_rng = RngStream(hp.seed).child("shuffle")
    dropout_rng = RngStream(hp.seed).child("dropout")
    history = TrainingHistory()
    names = list(trainable)
    tensors = [trainable[n] for n in names]

    step = 0
    best_val = math.inf
    since_best = 0
    for epoch in range(hp.epochs):
        order = shuffle_rng.permutation(len(grids))
        for lo in range(0, len(order), hp.batch_size):
            idx = order[lo:lo + hp.batch_size]
            batch = one_hot(grids[idx])
            t = targets[idx]
            with Tape() as tape:
                probs, _ = model.forward_documents(batch, "train", dropout_rng)
                batch_loss = loss(probs, t, head)
            value = batch_loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}: {value}")
            grads = tape.gradients(batch_loss, tensors)
            step += 1
            adam_step(trainable, dict(zip(names, grads)), state, hp, step)

        train_loss, train_acc = _eval_loss_accuracy(
            model, grids, targets, head, hp.batch_size)
        if val is not None:
            val_loss, val_acc = _eval_loss_accuracy(
                model, val[0], val[1], head, hp.batch_size)
        else:
            val_loss = val_acc = None
        history.rows.append(EpochStats(epoch, train_loss, train_acc,
                                       val_loss, val_acc))

        if hp.early_stop_patience is not None and val_loss is not None:
            if val_loss < best_val:
                best_val = val_loss
                since_best = 0
            else:
                since_best += 1
                if since_best >= hp.early_stop_patience:
                    break
    return model, history
