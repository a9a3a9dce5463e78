"""Dense float tensors and the reverse-mode differentiation tape.

A Tensor wraps a numpy float array (float32 by default; float64 is
preserved so gradient checks can run with double accumulation). Ops from
`charnet.ops` compute forward values eagerly and, when a Tape is active
on the current thread, append one node per op. Nodes are appended in
construction order, so walking the node list backwards is a reverse
topological traversal that visits each node exactly once.

Tensors are treated as immutable values by the ops; only the optimizer
writes to parameter data between tape lifetimes.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError

_local = threading.local()


def active_tape() -> "Tape | None":
    return getattr(_local, "tape", None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), self.requires_grad, self.name)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


class Node:
    """One recorded op: kind, parent node ids, and a backward closure that
    maps the output gradient to per-parent gradients."""

    __slots__ = ("op", "parents", "backward_fn", "out")

    def __init__(self, op: str, parents: tuple[int, ...], backward_fn, out: Tensor):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.out = out


class Tape:
    """Append-only op record; usable as a context manager."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._node_of: dict[int, int] = {}  # id(tensor) -> node index
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = active_tape()
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._prev
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def tracked(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._node_of

    def _leaf_id(self, t: Tensor) -> int:
        nid = self._node_of.get(id(t))
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(Node("leaf", (), None, t))
            self._node_of[id(t)] = nid
        return nid

    def record(self, op: str, out: Tensor, parents: Sequence[Tensor], backward_fn) -> None:
        pids = tuple(self._leaf_id(p) for p in parents)
        self.nodes.append(Node(op, pids, backward_fn, out))
        self._node_of[id(out)] = len(self.nodes) - 1

    def gradients(self, loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
        """Gradient of the scalar loss for each tensor in params, in order.
        Parameters that did not participate in the graph get zeros."""
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        params = list(params)
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        loss_id = self._node_of.get(id(loss))
        if loss_id is not None:
            grads[loss_id] = np.ones_like(loss.data)
            for nid in range(len(self.nodes) - 1, -1, -1):
                g = grads[nid]
                node = self.nodes[nid]
                if g is None or node.backward_fn is None:
                    continue
                for pid, pg in zip(node.parents, node.backward_fn(g)):
                    if pg is None:
                        continue
                    grads[pid] = pg if grads[pid] is None else grads[pid] + pg
        out = []
        for p in params:
            nid = self._node_of.get(id(p))
            g = grads[nid] if nid is not None else None
            g = np.zeros_like(p.data) if g is None else g.astype(p.data.dtype, copy=False)
            p.grad = g
            out.append(g)
        return out


def backward(loss: Tensor, tape: Tape, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Reverse-accumulate the scalar loss through the tape; returns one
    gradient array per parameter (zeros for non-participating ones)."""
    return tape.gradients(loss, params)


def record_op(op: str, out_data: np.ndarray, parents: Sequence[Tensor],
              backward_fn: Callable) -> Tensor:
    """Wrap an op result; appends a node when a tape is active and any
    parent is tracked. Ops call this instead of touching the tape."""
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(tape.tracked(p) for p in parents):
        tape.record(op, out, parents, backward_fn)
    return out


def dump_tensor(t: Tensor, fh) -> None:
    """Debug dump: one line of dimensions, then one decimal float per
    line in row-major order. %.9g round-trips float32 exactly."""
    fh.write(" ".join(str(d) for d in t.shape) + "\n")
    for v in t.data.reshape(-1):
        fh.write(format(float(v), ".9g") + "\n")


def read_tensor_dump(fh) -> Tensor:
    shape = tuple(int(d) for d in fh.readline().split())
    count = int(np.prod(shape)) if shape else 1
    values = [float(fh.readline()) for _ in range(count)]
    return Tensor(np.asarray(values, dtype=np.float32).reshape(shape))
