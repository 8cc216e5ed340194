"""Binary indexed sum tree over per-site rates.

Leaves hold nonnegative per-site rates; internal levels hold pair sums, so
the root is the total rate.  Selection descends from the root in O(log N),
single-leaf updates walk up in O(log N), and a full rebuild is a handful of
vectorized adds used after bulk rate changes.
"""

from __future__ import annotations

import numpy as np


class RateTree:

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        self.n_leaves = len(values)
        size = 1
        while size < max(self.n_leaves, 1):
            size *= 2
        self.size = size
        self.levels = []
        width = size
        while width >= 1:
            self.levels.append(np.zeros(width))
            width //= 2
        self.rebuild(values)

    @property
    def total(self) -> float:
        return float(self.levels[-1][0])

    def rebuild(self, values):
        leaves = self.levels[0]
        leaves[:self.n_leaves] = values
        leaves[self.n_leaves:] = 0.0
        for lo, hi in zip(self.levels, self.levels[1:]):
            np.add(lo[0::2], lo[1::2], out=hi)

    def get(self, i) -> float:
        return float(self.levels[0][i])

    def set(self, i, value):
        self.levels[0][i] = value
        for lo, hi in zip(self.levels, self.levels[1:]):
            j = i >> 1
            hi[j] = lo[2 * j] + lo[2 * j + 1]
            i = j

    def select(self, target) -> int:
        """Largest-prefix descent: index i with cum(i) <= target < cum(i+1)."""
        idx = 0
        for level in reversed(self.levels[:-1]):
            idx *= 2
            left = level[idx]
            if target >= left:
                target -= left
                idx += 1
        if idx >= self.n_leaves or self.levels[0][idx] <= 0.0:
            # roundoff pushed the target past the last positive leaf
            positive = np.nonzero(self.levels[0][:self.n_leaves] > 0.0)[0]
            if len(positive) == 0:
                raise ValueError("selection from an all-zero rate tree")
            idx = int(positive[-1]) if idx >= positive[-1] else int(positive[positive >= idx][0])
        return int(idx)
