"""Transfer learning: head replacement, layer freezing, fine-tuning.

The default recipe for widening a trained classifier's label space is to
reinitialize the final dense layer at the new width, freeze the whole
sentence encoder, and fine-tune the document classifier on the new
labeled set. Every non-head block survives head replacement bitwise;
frozen blocks survive any amount of fine-tuning bitwise.

The new label vocabulary comes from the fine-tuning dataset. Old class
names that reappear there (e.g. a binary model's "friend" persisting
into a wider taxonomy) keep their meaning by name, not by position: the
head is fresh either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import DataError
from .model import LayerSpec, Model, ModelSpec, head_block_prefix, param_shapes
from .rng import RngStream
from .tensor import Tensor
from .training import Hyperparams, TrainingHistory, train


@dataclass(frozen=True)
class FreezeSpec:
    """Weight blocks to exclude from updates; each entry is an exact
    block name or a prefix (e.g. "encoder." for the whole encoder)."""

    patterns: tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "FreezeSpec":
        """Comma-separated patterns; "encoder" and "classifier" are
        accepted as shorthand for their prefixes."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return cls(tuple(p if p.endswith(".") or "." in p else p + "."
                         for p in parts))


def replace_head(model: Model, n_new_classes: int, seed: int) -> Model:
    """New model with the final dense layer reinitialized at the new
    width; every other block is copied bitwise. The label vocabulary is
    cleared pending the fine-tuning dataset."""
    if n_new_classes < 2:
        raise DataError(f"n_new_classes must be >= 2, got {n_new_classes}")
    old = model.spec
    head_layer = old.classifier_layers[-1]
    new_head = LayerSpec(head_layer.kind, head_layer.name,
                         dict(head_layer.hyper, units=n_new_classes))
    spec = ModelSpec(
        encoder_layers=old.encoder_layers,
        classifier_layers=old.classifier_layers[:-1] + (new_head,),
        sentence_dim=old.sentence_dim,
        feature_dim=old.feature_dim,
        n_classes=n_new_classes,
        encoding=old.encoding,
        head=old.head,
        scale=old.scale,
    )
    rng = RngStream(seed).child("head-init")
    head = head_block_prefix(spec)
    bound = 1.0 / np.sqrt(old.feature_dim)
    weights: dict[str, Tensor] = {}
    for name, shape in param_shapes(spec).items():
        if name == head + "weight":
            data = rng.uniform(-bound, bound, shape)
        elif name == head + "bias":
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = model.weights[name].data.copy()
        weights[name] = Tensor(data, requires_grad=True, name=name)
    return Model(spec, weights, [], model.alphabet)


def freeze(model: Model, spec: FreezeSpec) -> frozenset[str]:
    """Resolve freeze patterns to the set of frozen block names. Every
    pattern must match at least one block."""
    frozen: set[str] = set()
    for pattern in spec.patterns:
        hits = [n for n in model.weights
                if n == pattern or n.startswith(pattern)]
        if not hits:
            raise DataError(f"freeze pattern {pattern!r} matches no weight block")
        frozen.update(hits)
    return frozenset(frozen)


def fine_tune(model: Model, mask: frozenset[str], dataset: LabeledDataset,
              hp: Hyperparams, val_set: LabeledDataset | None = None
              ) -> tuple[Model, TrainingHistory]:
    """The standard training loop with the masked blocks held fixed."""
    return train(model, dataset, val_set, hp, frozen=mask)
