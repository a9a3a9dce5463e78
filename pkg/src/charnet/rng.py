"""Seeded random number streams.

Every source of randomness in the package (weight init, dropout masks,
shuffling, sampling) draws from an RngStream so that a run is fully
reproducible from its seed. Streams are backed by numpy's PCG64, which
produces identical sequences for identical seeds on all platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "pcg64"


class RngStream:
    """A named, seeded generator with derivable child streams."""

    def __init__(self, seed: int, _keys: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._keys = _keys
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_keys)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int | str) -> "RngStream":
        """Derive an independent stream; same (seed, keys) -> same stream."""
        coded = tuple(
            zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k)
            for k in keys
        )
        return RngStream(self.seed, self._keys + coded)

    def uniform(self, low: float, high: float, size, dtype=np.float32) -> np.ndarray:
        return self.generator.uniform(low, high, size=size).astype(dtype)

    def normal(self, size, dtype=np.float64) -> np.ndarray:
        return self.generator.normal(size=size).astype(dtype)

    def random(self, size) -> np.ndarray:
        return self.generator.random(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self.generator.choice(n, size=k, replace=False)
