"""Seeded random streams. Every stream is derived from (seed, shard id)."""

import numpy as np


def stream(seed: int, shard: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(shard),)))


def shard_sizes(total: int, shard_size: int) -> list:
    """Split ``total`` into fixed-size shards; the split never depends on threads."""
    full, rest = divmod(int(total), int(shard_size))
    return [shard_size] * full + ([rest] if rest else [])
