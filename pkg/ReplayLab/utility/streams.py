"""Seeded random streams, keyed by integer tuples instead of call order."""

from typing import Iterable, Optional

import numpy as np

from .errors import ProtocolError

# Stream purposes, mixed into every key so two uses of the same seed never collide.
PURPOSE_GRAPH = 1
PURPOSE_SENSITIVE = 2
PURPOSE_STIMULUS = 3
PURPOSE_PHASE = 4
PURPOSE_POLICY = 5
PURPOSE_TRAIN = 6
PURPOSE_SHIELD = 7
PURPOSE_VERIFY = 8


def seed_sequence(*key: int) -> np.random.SeedSequence:
    """Build a SeedSequence from a tuple of nonnegative integers."""
    return np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key])


def make_rng(*key: int) -> np.random.Generator:
    """A fresh PCG64 generator for the given key."""
    return np.random.Generator(np.random.PCG64(seed_sequence(*key)))


class UniformStream:
    """
    A source of U[0, 1) draws consumed in fixed-size blocks.

    In independent mode the stream wraps an unbounded generator. In paired mode
    it is a finite pre-drawn block, and replaying the same block (``rewind``)
    gives bit-identical draws; running past its end is a protocol error.

    Args:
        rng (np.random.Generator): Generator feeding the stream.
        capacity (Optional[int]): Number of pre-drawn uniforms for paired mode,
            or None for an unbounded stream.
    """

    def __init__(self, rng: np.random.Generator, capacity: Optional[int] = None):
        self.rng = rng
        self.capacity = capacity
        self._block = rng.random(capacity) if capacity is not None else None
        self._pos = 0

    @property
    def paired(self) -> bool:
        return self._block is not None

    def take(self, n: int) -> np.ndarray:
        if self._block is None:
            return self.rng.random(n)
        end = self._pos + n
        if end > self._block.size:
            raise ProtocolError(
                f"Paired random stream exhausted: asked for {n} draws with "
                f"{self._block.size - self._pos} left."
            )
        out = self._block[self._pos:end]
        self._pos = end
        return out

    def random(self) -> float:
        """One draw, so a stream can stand in for a Generator when sampling actions."""
        return float(self.take(1)[0])

    def rewind(self) -> None:
        """Restart a paired stream from its first draw."""
        self._pos = 0


def phase_stream(key: Iterable[int], paired: bool, capacity: int) -> UniformStream:
    """Stream for one RSD phase; paired streams are finite blocks of ``capacity`` draws."""
    rng = make_rng(*key)
    return UniformStream(rng, capacity if paired else None)
