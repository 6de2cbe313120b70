"""Reproducible, splittable random streams.

A stream is identified by ``(seed, stream_id)`` plus an optional child path.
Draws come from a Philox counter-based generator seeded through
``numpy.random.SeedSequence`` so distinct ids give independent streams.
"""
from __future__ import annotations

import numpy as np


class RngStream:
    """Random stream owned by a single logical task.

    Parameters
    ----------
    seed : int
        64-bit user seed.
    stream_id : int
        64-bit stream identifier.
    path : tuple of int, optional
        Child path used by :meth:`child`.
    """

    __slots__ = ("seed", "stream_id", "path", "gen")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple = ()):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed < 2**64) or not (0 <= stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = seed
        self.stream_id = stream_id
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(seed, spawn_key=(stream_id, *self.path))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, i: int) -> "RngStream":
        """Independent sub-stream, deterministic in ``i``."""
        return RngStream(self.seed, self.stream_id, self.path + (int(i),))

    def normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, size=None):
        return self.gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)

    def provenance(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id, "path": list(self.path)}

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def as_stream(rng) -> RngStream:
    """Accept an RngStream or an int seed."""
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng), 0)
