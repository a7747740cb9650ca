"""Shared numerical plumbing: deterministic chunked reductions and RNG."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Rows per chunk in pairwise double sums; keeps intermediates ~tens of MB.
_CHUNK_ROWS = 1024


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream index).

    Philox streams are independent for distinct keys, so parallel sweeps can
    draw reproducibly regardless of scheduling.
    """
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


RNG_ALGORITHM = "philox4x64"


def chunk_ranges(n: int, rows: int = _CHUNK_ROWS):
    """Yield (start, stop) ranges covering range(n) in fixed-size blocks."""
    for start in range(0, n, rows):
        yield start, min(start + rows, n)


def deterministic_chunk_sum(n: int, chunk_fn, threads: int = 1, rows: int = _CHUNK_ROWS) -> float:
    """Sum chunk_fn(start, stop) over fixed row blocks of range(n).

    The reduction is over per-chunk partial sums in chunk-index order
    (math.fsum), so the result is bit-identical for any thread count.
    """
    ranges = list(chunk_ranges(n, rows))
    if threads <= 1 or len(ranges) <= 1:
        partials = [chunk_fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda r: chunk_fn(*r), ranges))
    return math.fsum(float(p) for p in partials)


def deterministic_chunk_vecsum(n: int, chunk_fn, width: int,
                               threads: int = 1, rows: int = _CHUNK_ROWS):
    """Vector variant: chunk_fn returns `width` partial sums per block.

    Each component is reduced with math.fsum in chunk-index order, so the
    result is bit-identical for any thread count.
    """
    ranges = list(chunk_ranges(n, rows))
    if threads <= 1 or len(ranges) <= 1:
        partials = [chunk_fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda r: chunk_fn(*r), ranges))
    return [math.fsum(float(p[k]) for p in partials) for k in range(width)]


def pairwise_reduce_max(n: int, chunk_fn, threads: int = 1, rows: int = _CHUNK_ROWS) -> float:
    """Max of chunk_fn(start, stop) over fixed row blocks (order-free)."""
    ranges = list(chunk_ranges(n, rows))
    if threads <= 1 or len(ranges) <= 1:
        partials = [chunk_fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda r: chunk_fn(*r), ranges))
    return max(float(p) for p in partials)


def as_unit(v: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Return v validated to be a unit vector within tol."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > tol:
        raise ValueError(f"expected a unit vector, got norm {n!r}")
    return v
