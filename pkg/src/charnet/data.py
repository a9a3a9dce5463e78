"""Labeled-dataset ingestion and balanced sampling.

Two formats are supported:

* CSV with header ``text,label`` (quoted fields, UTF-8), one label per row.
* JSONL with one object per line, keys ``text`` (string) and ``labels``
  (array of strings), allowing multi-label records.

The label vocabulary is built in first-seen order.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

from .errors import DataError
from .rng import RngStream


@dataclass
class LabeledDataset:
    records: list[tuple[str, frozenset[int]]]
    label_vocab: list[str]

    def __post_init__(self):
        if len(set(self.label_vocab)) != len(self.label_vocab):
            raise DataError("label vocabulary entries must be distinct")
        n = len(self.label_vocab)
        for text, labels in self.records:
            for lab in labels:
                if not 0 <= lab < n:
                    raise DataError(f"label id {lab} outside vocabulary of size {n}")

    def __len__(self) -> int:
        return len(self.records)

    def class_counts(self) -> dict[str, int]:
        """Single-label record count per class name."""
        counts = {name: 0 for name in self.label_vocab}
        for _, labels in self.records:
            if len(labels) == 1:
                counts[self.label_vocab[next(iter(labels))]] += 1
        return counts


@dataclass
class _VocabBuilder:
    names: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    def add(self, name: str) -> int:
        if name not in self.index:
            self.index[name] = len(self.names)
            self.names.append(name)
        return self.index[name]


def load_dataset(path, format: str = "csv") -> LabeledDataset:
    """Read a labeled dataset; raises DataError naming the offending line."""
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    if format == "csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise DataError(f"unknown dataset format {format!r} (expected csv or jsonl)")


def _load_csv(path) -> LabeledDataset:
    vocab = _VocabBuilder()
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected header with 'text' and 'label' columns")
        for row in reader:
            line = reader.line_num
            text, label = row.get("text"), row.get("label")
            if text is None or label is None or label == "":
                raise DataError(f"{path}: line {line}: missing text or label field")
            records.append((text, frozenset({vocab.add(label)})))
    return LabeledDataset(records, vocab.names)


def _load_jsonl(path) -> LabeledDataset:
    vocab = _VocabBuilder()
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_num}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj or "labels" not in obj:
                raise DataError(
                    f"{path}: line {line_num}: expected object with 'text' and 'labels'"
                )
            text, labels = obj["text"], obj["labels"]
            if not isinstance(text, str) or not isinstance(labels, list):
                raise DataError(f"{path}: line {line_num}: bad field types")
            records.append((text, frozenset(vocab.add(str(l)) for l in labels)))
    return LabeledDataset(records, vocab.names)


def balance_sample(d: LabeledDataset, n_per_class: int, seed: int) -> LabeledDataset:
    """Exactly n_per_class single-label records per class, sampled without
    replacement. Deterministic given the seed; when a class has exactly
    n_per_class records the whole class is taken, independent of seed."""
    by_class: dict[int, list[int]] = {i: [] for i in range(len(d.label_vocab))}
    for i, (_, labels) in enumerate(d.records):
        if len(labels) == 1:
            by_class[next(iter(labels))].append(i)

    chosen: list[int] = []
    for class_id, members in by_class.items():
        name = d.label_vocab[class_id]
        if len(members) < n_per_class:
            raise DataError(f"class {name} has {len(members)} < {n_per_class} records")
        rng = RngStream(seed).child("balance", class_id)
        picks = rng.choice_without_replacement(len(members), n_per_class)
        picks.sort()  # exhaustive draws are seed-independent this way
        chosen.extend(members[p] for p in picks)

    return LabeledDataset([d.records[i] for i in chosen], list(d.label_vocab))
