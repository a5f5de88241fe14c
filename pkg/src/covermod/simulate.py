"""Brute-force LSB embedding and synthetic covers with exact parity symmetry."""
from __future__ import annotations

import numpy as np

from .pixel_store import as_grid


def lsb_flip(x):
    """LSB flip: even values go up by one, odd values down by one."""
    return np.asarray(x) ^ 1


def random_flips(values, p: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each sample's LSB independently with probability ``p``."""
    values = np.asarray(values)
    return values ^ (rng.random(values.shape) < p).astype(values.dtype)


def lsb_embed(grid, rate: float, rng: np.random.Generator, eligible=None) -> np.ndarray:
    """Naive LSB embedding of a random bit stream.

    ``round(rate * n)`` of the ``n`` eligible samples are chosen uniformly
    and their LSBs overwritten with fair coin flips, so each eligible sample
    changes with probability close to ``rate / 2``.
    """
    grid = as_grid(grid)
    out = grid.copy()
    flat = out.reshape(-1)
    pool = np.arange(flat.size) if eligible is None else np.flatnonzero(np.asarray(eligible).reshape(-1))
    k = int(round(rate * len(pool)))
    chosen = rng.choice(pool, size=k, replace=False)
    bits = rng.integers(0, 2, size=k, dtype=np.uint8)
    flat[chosen] = (flat[chosen] & 0xFE) | bits
    return out


def smooth_rows(n: int, length: int, rng: np.random.Generator, scale: float = 3.0) -> np.ndarray:
    """Random-walk rows with two-sided geometric steps, kept inside [0, 254]."""
    q = 1.0 - 1.0 / (1.0 + scale)
    steps = rng.geometric(1.0 - q, size=(n, length - 1)) - rng.geometric(1.0 - q, size=(n, length - 1))
    start = rng.integers(40, 215, size=(n, 1))
    walk = np.concatenate([start, start + np.cumsum(steps, axis=1)], axis=1)
    # reflect into range, which keeps step magnitudes and symmetry in distribution
    walk = np.abs(walk)
    walk = np.where(walk > 254, 508 - walk, walk)
    return np.clip(walk, 0, 254)


def symmetric_cover(height: int, width: int, rng: np.random.Generator,
                    block: int = 6, scale: float = 3.0) -> np.ndarray:
    """Grayscale cover whose disjoint pair and triplet censuses are parity symmetric.

    Rows are cut into ``block``-sample segments; half the segments are random
    walks and the other half are copies of them raised by one.  The shift flips
    every LSB while keeping exact differences, so ``|E_d| = |O_d|`` holds
    exactly for every tuple order dividing ``block``.  A ragged right-hand
    strip of ``width % block`` columns is filled the same way with shorter
    segments.
    """
    tail = width % block
    if tail:
        body = symmetric_cover(height, width - tail, rng, block, scale)
        strip = symmetric_cover(height, tail, rng, tail, scale) if tail > 1 else \
            rng.integers(0, 256, size=(height, 1, 1)).astype(np.uint8)
        return np.concatenate([body, strip], axis=1)
    n = height * width // block
    half = rng.permutation(n)
    base = smooth_rows((n + 1) // 2, block, rng, scale)
    segs = np.empty((n, block), dtype=np.int64)
    segs[half[: len(base)]] = base
    segs[half[len(base):]] = base[: n - len(base)] + 1
    return segs.reshape(height, width, 1).astype(np.uint8)
