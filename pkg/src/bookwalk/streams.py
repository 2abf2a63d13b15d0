"""Seeded, counter-based random streams.

Every stochastic routine in this package draws from a ``RandomStream``: a pair
of Philox counter-based generators keyed by ``(seed, stream_id)``.  Coin flips
and displacement draws come from *disjoint* substreams, so two consumers that
interleave coins and value draws differently still see the same coin sequence
and the same value sequence.  That alignment is what lets the book driver and
the tree driver realize the same randomness draw-for-draw.

Replicas are split by stream id: ``RandomStream(seed, stream=i)`` for replica
``i`` is independent of every other replica and reproducible on its own.

Barrier-survival exploration uses a second mechanism, ``node_generator``,
which keys a generator off a node's path in the tree.  A node's randomness is
then a pure function of its identity, so pruning more or fewer branches never
desynchronizes the draws of the branches that remain.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

_MASK64 = 0xFFFFFFFFFFFFFFFF
_BUFFER = 512

# spawn-key tag separating per-node generators from any other use of the seed
_NODE_TAG = 0x6E6F6465  # "node"


class _UniformSource:
    """Buffered stream of float64 uniforms from one Philox instance."""

    __slots__ = ("_gen", "_buf", "_i")

    def __init__(self, key_lo: int, key_hi: int) -> None:
        key = np.array([key_lo & _MASK64, key_hi & _MASK64], dtype=np.uint64)
        self._gen = Generator(Philox(key=key))
        self._buf = self._gen.random(_BUFFER)
        self._i = 0

    def next(self) -> float:
        i = self._i
        if i == _BUFFER:
            self._buf = self._gen.random(_BUFFER)
            i = 0
        self._i = i + 1
        return self._buf[i]


class RandomStream:
    """Deterministic stream of coins and displacement uniforms.

    Identical ``(seed, stream)`` pairs yield identical sequences, regardless
    of how reads are interleaved between the two substreams.
    """

    __slots__ = ("seed", "stream", "_coins", "_values")

    def __init__(self, seed: int, stream: int = 0) -> None:
        if seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if stream < 0:
            raise ValueError("stream id must be a nonnegative integer")
        self.seed = int(seed)
        self.stream = int(stream)
        self._coins = _UniformSource(self.seed, 2 * self.stream)
        self._values = _UniformSource(self.seed, 2 * self.stream + 1)

    def coin(self, p: float) -> bool:
        """One Bernoulli(p) draw from the coin substream."""
        return self._coins.next() < p

    def value_uniform(self) -> float:
        """One uniform in [0, 1) from the displacement substream."""
        return float(self._values.next())

    def split(self, index: int) -> "RandomStream":
        """Independent replica stream derived from the same master seed."""
        return RandomStream(self.seed, index)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RandomStream(seed={self.seed}, stream={self.stream})"


def node_generator(seed: int, replica: int, path: tuple[int, ...]) -> Generator:
    """Generator keyed to one tree node, for pruning-stable exploration.

    ``path`` is the sequence of child indices from the root.  The returned
    generator depends only on ``(seed, replica, path)``; exploring or skipping
    sibling subtrees cannot shift its output.
    """
    ss = SeedSequence(entropy=seed, spawn_key=(_NODE_TAG, replica, *path))
    return Generator(Philox(ss))
