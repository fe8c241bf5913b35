"""k-d tree over 3-D points for nearest-neighbor correspondence search.

Built once per ICP call (targets are fixed within a call). Median split on
cycling axes, small leaves scanned vectorized. The brute-force scan below is
the correctness oracle: on tie-free inputs both must return identical
indices.
"""

from __future__ import annotations

import numpy as np

_LEAF_SIZE = 16


class KdTree:
    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
            raise ValueError("KdTree needs a non-empty (n, 3) array")
        self.points = points
        # node arrays, index 0 is the root
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._leaf_idx: list[np.ndarray | None] = []
        self._build(np.arange(len(points)), depth=0)

    def _new_node(self) -> int:
        self._axis.append(-1)
        self._split.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._leaf_idx.append(None)
        return len(self._axis) - 1

    def _build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if len(idx) <= _LEAF_SIZE:
            self._leaf_idx[node] = idx
            return node
        axis = depth % 3
        order = np.argsort(self.points[idx, axis], kind="stable")
        idx = idx[order]
        mid = len(idx) // 2
        self._axis[node] = axis
        self._split[node] = float(self.points[idx[mid], axis])
        self._left[node] = self._build(idx[:mid], depth + 1)
        self._right[node] = self._build(idx[mid:], depth + 1)
        return node

    def query(self, point: np.ndarray) -> tuple[int, float]:
        """Nearest target index and Euclidean distance for one query point."""
        best_idx = -1
        best_sq = np.inf
        stack = [(0, 0.0)]
        while stack:
            node, bound_sq = stack.pop()
            if bound_sq >= best_sq:
                continue
            leaf = self._leaf_idx[node]
            if leaf is not None:
                diffs = self.points[leaf] - point
                d_sq = np.einsum("ij,ij->i", diffs, diffs)
                local = int(np.argmin(d_sq))
                if d_sq[local] < best_sq:
                    best_sq = float(d_sq[local])
                    best_idx = int(leaf[local])
                continue
            axis, split = self._axis[node], self._split[node]
            delta = point[axis] - split
            near, far = (self._right[node], self._left[node]) if delta >= 0 else (
                self._left[node], self._right[node])
            stack.append((far, delta * delta))
            stack.append((near, 0.0))
        return best_idx, float(np.sqrt(best_sq))

    def query_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        indices = np.empty(len(points), dtype=np.int64)
        dists = np.empty(len(points), dtype=np.float64)
        for i, p in enumerate(np.asarray(points, dtype=np.float64)):
            indices[i], dists[i] = self.query(p)
        return indices, dists


def brute_force_nearest(targets: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest-neighbor scan, the oracle for KdTree."""
    targets = np.asarray(targets, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    diffs = queries[:, None, :] - targets[None, :, :]
    d_sq = np.einsum("qtj,qtj->qt", diffs, diffs)
    idx = np.argmin(d_sq, axis=1)
    return idx, np.sqrt(d_sq[np.arange(len(queries)), idx])
