"""Deterministic per-trial random streams and block-parallel mapping.

Every trial (trajectory, event, link) gets its own generator derived from
``(seed, domain, index)``. Work is cut into fixed-size blocks; blocks may run
in worker processes but are always reduced in index order, so results do not
depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 1024

# stream domains keep unrelated draws from sharing a generator
DOMAIN_TRAJECTORY = 1
DOMAIN_EVENT = 2
DOMAIN_LINK = 3
DOMAIN_SHOTS = 4
DOMAIN_BOOTSTRAP = 5


def trial_rng(seed: int, index: int, domain: int = 0, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(domain), *map(int, extra), int(index)])


def block_ranges(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    if n < 0:
        raise ValueError("n must be non-negative")
    return [(lo, min(lo + block_size, n)) for lo in range(0, n, block_size)]


def map_blocks(func: Callable[[int, int], T], n: int, workers: int = 1,
               block_size: int = BLOCK_SIZE) -> list[T]:
    """Evaluate ``func(lo, hi)`` over fixed blocks of ``range(n)``, in order.

    ``func`` must be picklable when ``workers > 1``.
    """
    ranges = block_ranges(n, block_size)
    if workers <= 1 or len(ranges) <= 1:
        return [func(lo, hi) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise sum of block partials, in index order."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to sum")
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]
