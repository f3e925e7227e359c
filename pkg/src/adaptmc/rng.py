"""Reproducible Gaussian noise streams built on the Philox counter generator.

Stream ``(seed, index)`` is Philox-4x64 keyed with the two words ``(seed, index)``
and a counter starting at zero. Each 64-bit output ``b`` becomes the uniform
``((b >> 11) + 0.5) * 2**-53``, which lies strictly inside (0, 1), and is mapped
to a standard normal by the inverse CDF. Consequently:

* draws depend only on ``(seed, index)`` and on how many variates were consumed
  before, never on how the consumption was chunked;
* replicate ``i`` of a study always sees the same noise whatever the number of
  replicates or their execution order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import ndtri

__all__ = ["NormalStream", "StreamBatch", "replicate_streams"]

_MASK64 = (1 << 64) - 1


class NormalStream:
    """Sequential source of standard normal vectors of a fixed dimension."""

    def __init__(self, dim: int, seed: int = 0, index: int = 0):
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        if not 0 <= seed <= _MASK64 or not 0 <= index <= _MASK64:
            raise ValueError("seed and index must fit in an unsigned 64-bit word")
        self.dim = int(dim)
        self.seed = int(seed)
        self.index = int(index)
        self._bits = np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
        self.consumed = 0

    def uniforms(self, count: int) -> np.ndarray:
        raw = self._bits.random_raw(count)
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def draw(self, k: int) -> np.ndarray:
        """Return the next ``k`` vectors as a ``(k, dim)`` array."""
        z = ndtri(self.uniforms(k * self.dim)).reshape(k, self.dim)
        self.consumed += k
        return z

    def __repr__(self) -> str:
        return f"NormalStream(dim={self.dim}, seed={self.seed}, index={self.index})"


class StreamBatch:
    """Several independent streams advanced in lockstep.

    ``draw(k)`` returns a ``(k, R, dim)`` block whose slice ``[:, r]`` is exactly
    what ``streams[r].draw(k)`` would have produced on its own.
    """

    def __init__(self, streams: Sequence[NormalStream]):
        if not streams:
            raise ValueError("need at least one stream")
        dims = {s.dim for s in streams}
        if len(dims) != 1:
            raise ValueError(f"streams disagree on dimension: {sorted(dims)}")
        self.streams = list(streams)
        self.dim = dims.pop()

    def __len__(self) -> int:
        return len(self.streams)

    def draw(self, k: int) -> np.ndarray:
        return np.stack([s.draw(k) for s in self.streams], axis=1)


def replicate_streams(dim: int, seed: int, count: int, start: int = 0) -> StreamBatch:
    """Streams ``(seed, start), ..., (seed, start + count - 1)``."""
    return StreamBatch([NormalStream(dim, seed, start + i) for i in range(count)])
