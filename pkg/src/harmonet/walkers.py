"""Vectorized stepping for many random walkers at once.

A kernel maps vertices to rows of an int64 state array and advances all rows
by one step given uniform variates. ``TableKernel`` works for any network by
growing a neighbor table on demand; models with a regular structure supply
their own kernels that never touch the oracle.
"""

from __future__ import annotations

import numpy as np


class WalkKernel:
    width = 1

    def encode(self, vertices) -> np.ndarray:
        raise NotImplementedError

    def decode(self, row):
        raise NotImplementedError

    def step(self, state: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exact_for(self, vertex) -> bool:
        """Whether hitting this vertex is tracked exactly."""
        return True

    def far(self, state: np.ndarray, targets: np.ndarray):
        """Mask of walkers whose chance of ever reaching a target row is
        negligible (below 2^-50), or None when the kernel cannot tell."""
        return None


class TableKernel(WalkKernel):
    """Generic kernel: vertices get integer ids as walkers discover them."""

    def __init__(self, net, capacity: int = 1024):
        self.net = net
        self.ids: dict = {}
        self.verts: list = []
        self.start = np.zeros(capacity, dtype=np.int64)
        self.deg = np.zeros(capacity, dtype=np.int64)
        self.expanded = np.zeros(capacity, dtype=bool)
        self.nbr = np.zeros(4 * capacity, dtype=np.int64)
        self.cum = np.zeros(4 * capacity, dtype=float)
        self.fill = 0
        self.maxdeg = 1

    def _id(self, x) -> int:
        k = self.ids.get(x)
        if k is None:
            k = len(self.verts)
            self.ids[x] = k
            self.verts.append(x)
            if k >= len(self.start):
                n = 2 * len(self.start)
                for name in ("start", "deg", "expanded"):
                    old = getattr(self, name)
                    new = np.zeros(n, dtype=old.dtype)
                    new[: len(old)] = old
                    setattr(self, name, new)
        return k

    def _expand(self, k: int):
        nb = self.net.neighbors(self.verts[k])
        if not nb:
            raise ValueError(f"walker stuck at isolated vertex {self.verts[k]!r}")
        cs = np.array([c for _, c in nb], dtype=float)
        cum = np.cumsum(cs) / cs.sum()
        cum[-1] = 1.0
        ids = [self._id(y) for y, _ in nb]
        d = len(ids)
        while self.fill + d > len(self.nbr):
            for name in ("nbr", "cum"):
                old = getattr(self, name)
                new = np.zeros(2 * len(old), dtype=old.dtype)
                new[: len(old)] = old
                setattr(self, name, new)
        self.nbr[self.fill:self.fill + d] = ids
        self.cum[self.fill:self.fill + d] = cum
        self.start[k] = self.fill
        self.deg[k] = d
        self.expanded[k] = True
        self.fill += d
        self.maxdeg = max(self.maxdeg, d)

    def encode(self, vertices):
        return np.array([[self._id(x)] for x in vertices], dtype=np.int64).reshape(-1, 1)

    def attribute(self, ids: np.ndarray, fn, cache: dict) -> np.ndarray:
        """fn(vertex) for each id, memoized in ``cache``."""
        out = np.empty(len(ids), dtype=np.int64)
        for k, i in enumerate(ids.tolist()):
            v = cache.get(i)
            if v is None:
                v = cache[i] = fn(self.verts[i])
            out[k] = v
        return out

    def decode(self, row):
        return self.verts[int(row[0])]

    def step(self, state, u):
        s = state[:, 0]
        need = np.unique(s[~self.expanded[s]])
        for k in need.tolist():
            self._expand(k)
        st = self.start[s]
        d = self.deg[s]
        pick = np.zeros(len(s), dtype=np.int64)
        for j in range(self.maxdeg - 1):
            pos = st + np.minimum(j, d - 1)
            pick += (u >= self.cum[pos]) & (j < d - 1)
        return self.nbr[st + pick].reshape(-1, 1)
