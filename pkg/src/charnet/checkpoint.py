"""Binary checkpoint files.

Layout (all integers little-endian):

    magic          4 bytes  b"CNET"
    format_version u32
    spec           u32 length + UTF-8 JSON of the ModelSpec
    label vocab    u32 count, then per label u32 length + UTF-8 bytes
    alphabet       u32 length + UTF-8 of the symbols joined in order
    weights        u32 count, then per block (sorted by name):
                     u32 name length + UTF-8 name
                     u8 ndim, ndim x u32 dims
                     row-major float32 payload
    checksum       8 bytes, BLAKE2b-64 of everything above

The checksum is verified before any model object is constructed, so a
truncated or corrupted file never yields a partial model. Round-trips
are bitwise exact.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .alphabet import Alphabet
from .errors import CheckpointError
from .model import Model, ModelSpec, param_shapes
from .tensor import Tensor

MAGIC = b"CNET"
FORMAT_VERSION = 1
_CHECKSUM_BYTES = 8


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest()


def _write_bytes(buf: io.BytesIO, data: bytes) -> None:
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def save_checkpoint(model: Model, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _write_bytes(buf, json.dumps(model.spec.to_dict(), sort_keys=True).encode())
    buf.write(struct.pack("<I", len(model.label_vocab)))
    for label in model.label_vocab:
        _write_bytes(buf, label.encode())
    _write_bytes(buf, "".join(model.alphabet.symbols).encode())
    buf.write(struct.pack("<I", len(model.weights)))
    for name in sorted(model.weights):
        arr = np.ascontiguousarray(model.weights[name].data, dtype=np.float32)
        _write_bytes(buf, name.encode())
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_digest(payload))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: unexpected end of file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def sized_bytes(self) -> bytes:
        return self.take(self.u32())


def load_checkpoint(path) -> Model:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 + _CHECKSUM_BYTES:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    payload, stored = raw[:-_CHECKSUM_BYTES], raw[-_CHECKSUM_BYTES:]
    if _digest(payload) != stored:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")

    r = _Reader(payload, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, "
                              f"this build reads {FORMAT_VERSION}")
    try:
        spec = ModelSpec.from_dict(json.loads(r.sized_bytes().decode()))
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: bad spec section: {exc}") from exc
    labels = [r.sized_bytes().decode() for _ in range(r.u32())]
    alphabet = Alphabet(tuple(r.sized_bytes().decode()))

    expected = param_shapes(spec)
    weights: dict[str, Tensor] = {}
    for _ in range(r.u32()):
        name = r.sized_bytes().decode()
        ndim = r.u8()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        want = expected.get(name)
        if want is None:
            raise CheckpointError(f"{path}: unexpected weight block {name!r}")
        if shape != want:
            raise CheckpointError(f"{path}: block {name} has shape {shape}, "
                                  f"spec requires {want}")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).copy()
        weights[name] = Tensor(arr, requires_grad=True, name=name)
    if set(weights) != set(expected):
        missing = sorted(set(expected) - set(weights))
        raise CheckpointError(f"{path}: missing weight blocks {missing}")
    if r.pos != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - r.pos} trailing bytes")
    return Model(spec, weights, labels, alphabet)
