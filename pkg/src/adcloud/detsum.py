"""Deterministic splitting and combination.

Floating-point addition is not associative, so "same bits on any worker or
shard count" requires one canonical expression tree. Everything here derives
from a single shape: a range of n items splits into a left half of
ceil(n / 2) and a right half, recursively.

``proportional_split(n, parts)`` allocates contiguous part sizes by the same
recursion (left ceil(parts/2) parts receive ceil(n * left_parts / parts)
items). For any power-of-two ``parts`` the part boundaries therefore sit on
tree-node boundaries, so combining per-part partial sums with
``tree_reduce`` reproduces the n-leaf tree exactly: a sum over 1, 2, or 4
shards of the same data is bit-identical.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def proportional_split(n: int, parts: int) -> list[int]:
    """Contiguous part sizes (each floor or ceil of n/parts), halving-aligned."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if parts == 1:
        return [n]
    left_parts = math.ceil(parts / 2)
    left_n = math.ceil(n * left_parts / parts)
    return proportional_split(left_n, left_parts) + proportional_split(
        n - left_n, parts - left_parts
    )


def split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """[start, stop) ranges corresponding to proportional_split."""
    ranges = []
    start = 0
    for size in proportional_split(n, parts):
        ranges.append((start, start + size))
        start += size
    return ranges


def chunk_split(n: int, chunk: int) -> list[tuple[int, int]]:
    """Fixed-size chunks: sizes chunk, chunk, ..., remainder."""
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def tree_reduce(items: Sequence[T], combine: Callable[[T, T], T]) -> T:
    """Combine items with the canonical ceil-halving binary tree."""
    if not items:
        raise ValueError("tree_reduce of empty sequence")

    def reduce_range(lo: int, hi: int) -> T:
        if hi - lo == 1:
            return items[lo]
        mid = lo + math.ceil((hi - lo) / 2)
        return combine(reduce_range(lo, mid), reduce_range(mid, hi))

    return reduce_range(0, len(items))


def tree_sum(rows: np.ndarray) -> np.ndarray:
    """Sum rows of a 2-D array (axis 0) with the canonical halving tree.

    ``tree_sum(x[a:b]) + tree_sum(x[b:c])`` equals ``tree_sum(x[a:c])``
    bit-for-bit whenever b is the ceil-half point of [a, c); this is what the
    shard-count invariance of gradient aggregation rests on.
    """
    rows = np.asarray(rows)
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1:], dtype=rows.dtype)

    def sum_range(lo: int, hi: int) -> np.ndarray:
        if hi - lo == 1:
            return rows[lo]
        mid = lo + math.ceil((hi - lo) / 2)
        return sum_range(lo, mid) + sum_range(mid, hi)

    return sum_range(0, rows.shape[0]).copy()


def row_dots(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Per-row dot products with a fixed left-to-right column order.

    Avoids BLAS so the reduction order per row cannot depend on matrix shape
    or threading.
    """
    matrix = np.asarray(matrix)
    out = matrix[:, 0] * vector[0]
    for j in range(1, matrix.shape[1]):
        out = out + matrix[:, j] * vector[j]
    return out
