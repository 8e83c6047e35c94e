"""Compressed adjacency for undirected simple graphs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Graph:
    N: int
    edges: np.ndarray  # (m, 2) int64, u < v, lexicographically sorted
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edges = e
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        self.indptr = np.zeros(self.N + 1, dtype=np.int64)
        np.add.at(self.indptr, src + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self.indices = dst

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def adjacency(self, dtype=np.int64) -> np.ndarray:
        A = np.zeros((self.N, self.N), dtype=dtype)
        if self.m:
            A[self.edges[:, 0], self.edges[:, 1]] = 1
            A[self.edges[:, 1], self.edges[:, 0]] = 1
        return A

    def adjacency_bool(self) -> np.ndarray:
        return self.adjacency(dtype=bool)


def spmv_sum(g: Graph, values) -> np.ndarray:
    """out[u] = sum of values[v] over v in N(u). Exact for Python-int (object) inputs."""
    values = np.asarray(values)
    deg = g.degrees
    out = np.zeros(g.N, dtype=values.dtype if values.dtype != object else object)
    if values.dtype == object:
        out[:] = 0
    if g.indices.size == 0:
        return out
    gathered = values[g.indices]
    nz = deg > 0
    starts = g.indptr[:-1][nz]
    out[nz] = np.add.reduceat(gathered, starts)
    return out
