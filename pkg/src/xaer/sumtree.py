"""Array-backed segment trees (sum / min / max) with vectorized updates."""

from __future__ import annotations

import numpy as np


_SCALAR_OPS = {np.add: lambda a, b: a + b, np.minimum: min, np.maximum: max}


class SegmentTree:
    """Complete binary tree over ``capacity`` leaves, combined with a ufunc.

    Node 1 is the root; leaves live at ``capacity + i``. Parents are always
    recomputed from their children, never incremented, so internal nodes
    never drift from the leaves.
    """

    def __init__(self, capacity: int, op: np.ufunc, neutral: float):
        size = 1
        while size < capacity:
            size *= 2
        self.capacity = size
        self.op = op
        self.neutral = neutral
        self.nodes = np.full(2 * size, neutral, dtype=np.float64)

    def __getitem__(self, idx):
        return self.nodes[self.capacity + np.asarray(idx)]

    def __setitem__(self, idx, value):
        if np.ndim(idx) == 0:
            self._set_one(int(idx), float(value))
            return
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 1:
            self._set_one(int(idx.ravel()[0]), float(np.ravel(value)[0]))
            return
        value = np.broadcast_to(np.asarray(value, dtype=np.float64), idx.shape)
        nodes, op = self.nodes, self.op
        pos = idx + self.capacity
        nodes[pos] = value
        # duplicate parents just recompute the same value
        pos = pos // 2
        while pos[0] >= 1:
            nodes[pos] = op(nodes[2 * pos], nodes[2 * pos + 1])
            pos = pos // 2

    def _set_one(self, i: int, value: float) -> None:
        nodes, op = self.nodes, _SCALAR_OPS[self.op]
        pos = i + self.capacity
        nodes[pos] = value
        pos //= 2
        while pos >= 1:
            nodes[pos] = op(nodes[2 * pos], nodes[2 * pos + 1])
            pos //= 2

    def reduce(self) -> float:
        return float(self.nodes[1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity:]

    def grow(self, capacity: int) -> None:
        """Enlarge to at least ``capacity`` leaves, keeping leaf values by index."""
        if capacity <= self.capacity:
            return
        old = self.leaves().copy()
        size = self.capacity
        while size < capacity:
            size *= 2
        self.capacity = size
        self.nodes = np.full(2 * size, self.neutral, dtype=np.float64)
        self.nodes[size:size + len(old)] = old
        for level_start in _levels(size):
            idx = np.arange(level_start, 2 * level_start)
            self.nodes[idx] = self.op(self.nodes[2 * idx], self.nodes[2 * idx + 1])


def _levels(size: int):
    start = size // 2
    while start >= 1:
        yield start
        start //= 2


class SumTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, np.add, 0.0)

    @property
    def total(self) -> float:
        return self.reduce()

    def find(self, mass) -> np.ndarray:
        """Leaf indices whose prefix-sum interval contains each value of ``mass``.

        Values are clipped into ``[0, total)``; zero-priority leaves are never
        returned while the total is positive.
        """
        mass = np.array(mass, dtype=np.float64, ndmin=1)
        idx = np.ones(mass.shape, dtype=np.int64)
        while idx[0] < self.capacity:
            left = 2 * idx
            left_sum = self.nodes[left]
            go_right = (mass >= left_sum) & (self.nodes[left + 1] > 0)
            mass = np.where(go_right, mass - left_sum, mass)
            idx = np.where(go_right, left + 1, left)
        return idx - self.capacity


class MinTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, np.minimum, np.inf)


class MaxTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, np.maximum, -np.inf)
