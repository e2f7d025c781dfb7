"""Deterministic per-replica random streams.

Every Monte Carlo routine in the lab draws replica ``r`` from the Philox
counter-based generator keyed by the 64-bit master seed and jumped ``r``
times.  The stream therefore depends only on ``(seed, r)`` and is identical
no matter how replicas are distributed over workers.
"""

from __future__ import annotations

import numpy as np


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Generator for one replica, independent of execution order."""
    if replica < 0:
        raise ValueError("replica index must be nonnegative")
    bitgen = np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    if replica:
        bitgen = bitgen.jumped(replica)
    return np.random.Generator(bitgen)


def pairwise_sum(values: np.ndarray) -> float:
    """Order-fixed pairwise reduction used for reproducible aggregation."""
    vals = np.asarray(values, dtype=float)
    n = vals.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        vals = np.concatenate([vals[:half] + vals[half : 2 * half], vals[2 * half : n]])
        n = vals.size
    return float(vals[0])
