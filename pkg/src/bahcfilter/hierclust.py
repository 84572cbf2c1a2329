"""Average-linkage agglomerative clustering and the HCAL filtered matrix.

Cluster ids follow the usual linkage-table convention: leaves are
``0..n-1`` and the cluster created by merge ``k`` gets id ``n + k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .errors import DataError

__all__ = [
    "Dendrogram",
    "correlation_to_distance",
    "average_linkage",
    "hcal_filter",
    "cophenetic_matrix",
    "cophenetic_correlation",
]

Array = NDArray[np.float64]


@dataclass(frozen=True)
class Dendrogram:
    """The ``n - 1`` merges of an agglomerative clustering, in merge order."""

    left: NDArray[np.int64]
    right: NDArray[np.int64]
    heights: Array
    counts: NDArray[np.int64]

    @property
    def n_leaves(self) -> int:
        return len(self.heights) + 1

    def __len__(self) -> int:
        return len(self.heights)

    def members(self) -> list[NDArray[np.int64]]:
        """Leaf members of every cluster id, leaves first."""
        n = self.n_leaves
        out: list[NDArray[np.int64]] = [np.array([i]) for i in range(n)]
        for a, b in zip(self.left, self.right):
            out.append(np.concatenate((out[a], out[b])))
        return out

    def merge_blocks(self) -> Iterator[tuple[NDArray[np.int64], NDArray[np.int64], float]]:
        """Yield (left members, right members, height) for every merge."""
        mem = self.members()
        for a, b, h in zip(self.left, self.right, self.heights):
            yield mem[a], mem[b], float(h)

    def partitions(self) -> list[frozenset[frozenset[int]]]:
        """Merge sequence as unordered pairs of leaf sets, independent of cluster ids."""
        return [
            frozenset((frozenset(a.tolist()), frozenset(b.tolist())))
            for a, b, _ in self.merge_blocks()
        ]

    def to_array(self) -> Array:
        """Linkage table with columns (left, right, height, count)."""
        return np.column_stack(
            (self.left.astype(float), self.right.astype(float), self.heights, self.counts.astype(float))
        )

    def write_table(self, fh: TextIO) -> None:
        for a, b, h, c in zip(self.left, self.right, self.heights, self.counts):
            fh.write(f"{a} {b} {float(h)!r} {c}\n")

    @classmethod
    def read_table(cls, fh: TextIO) -> "Dendrogram":
        rows = [line.split() for line in fh if line.strip()]
        if any(len(r) != 4 for r in rows):
            raise DataError("linkage table lines must read 'left right height count'")
        return cls(
            np.array([int(r[0]) for r in rows], dtype=np.int64),
            np.array([int(r[1]) for r in rows], dtype=np.int64),
            np.array([float(r[2]) for r in rows]),
            np.array([int(r[3]) for r in rows], dtype=np.int64),
        )


def correlation_to_distance(c: ArrayLike) -> Array:
    """``d_ij = 1 - c_ij`` with an exactly zero diagonal."""
    d = 1.0 - np.asarray(c, dtype=np.float64)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


@njit(cache=True)
def _key_less(h1, a1, b1, h2, a2, b2):
    if h1 != h2:
        return h1 < h2
    if a1 != a2:
        return a1 < a2
    return b1 < b2


@njit(cache=True)
def _row_min(dist, ids, active, i):
    n = dist.shape[0]
    best = -1
    bh, ba, bb = np.inf, 0, 0
    for j in range(n):
        if j == i or not active[j]:
            continue
        h = dist[i, j]
        a = min(ids[i], ids[j])
        b = max(ids[i], ids[j])
        if best < 0 or _key_less(h, a, b, bh, ba, bb):
            best, bh, ba, bb = j, h, a, b
    return best


@njit(cache=True)
def _upgma(d, c, with_values):
    """Average linkage on ``d``; optionally the mean of ``c`` over each merged block.

    The nearest partner of every active slot is cached under the total order
    (distance, min id, max id), so each merge only rescans rows whose cached
    partner disappeared.
    """
    n = d.shape[0]
    dist = d.copy()
    ids = np.arange(n)
    sizes = np.ones(n)
    active = np.ones(n, dtype=np.bool_)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    heights = np.empty(n - 1)
    counts = np.empty(n - 1, dtype=np.int64)

    if with_values:
        csum = c.copy()
        cmin = c.copy()
        cmax = c.copy()
        out = np.empty((n, n))
    else:
        csum = np.empty((1, 1))
        cmin = csum
        cmax = csum
        out = csum
    # members of slot s: head[s] -> nxt[...] -> ... -> -1
    head = np.arange(n)
    tail = np.arange(n)
    nxt = np.full(n, -1)

    nn = np.empty(n, dtype=np.int64)
    for i in range(n):
        nn[i] = _row_min(dist, ids, active, i)

    for k in range(n - 1):
        p = -1
        bh, ba, bb = np.inf, 0, 0
        for i in range(n):
            if not active[i]:
                continue
            j = nn[i]
            h = dist[i, j]
            a = min(ids[i], ids[j])
            b = max(ids[i], ids[j])
            if p < 0 or _key_less(h, a, b, bh, ba, bb):
                p, bh, ba, bb = i, h, a, b
        q = nn[p]
        if ids[p] > ids[q]:
            p, q = q, p
        left[k] = ids[p]
        right[k] = ids[q]
        heights[k] = dist[p, q]
        np_ = sizes[p]
        nq = sizes[q]
        counts[k] = int(np_ + nq)

        if with_values:
            if cmin[p, q] == cmax[p, q]:
                v = cmin[p, q]
            else:
                v = csum[p, q] / (np_ * nq)
            a = head[p]
            while a >= 0:
                b = head[q]
                while b >= 0:
                    out[a, b] = v
                    out[b, a] = v
                    b = nxt[b]
                a = nxt[a]
            for j in range(n):
                if active[j] and j != p and j != q:
                    s = csum[p, j] + csum[q, j]
                    csum[p, j] = s
                    csum[j, p] = s
                    lo = min(cmin[p, j], cmin[q, j])
                    cmin[p, j] = lo
                    cmin[j, p] = lo
                    hi = max(cmax[p, j], cmax[q, j])
                    cmax[p, j] = hi
                    cmax[j, p] = hi

        for j in range(n):
            if active[j] and j != p and j != q:
                r = (np_ * dist[p, j] + nq * dist[q, j]) / (np_ + nq)
                dist[p, j] = r
                dist[j, p] = r
        nxt[tail[p]] = head[q]
        tail[p] = tail[q]
        active[q] = False
        sizes[p] = np_ + nq
        ids[p] = n + k

        if k == n - 2:
            break
        nn[p] = _row_min(dist, ids, active, p)
        for i in range(n):
            if not active[i] or i == p:
                continue
            if nn[i] == p or nn[i] == q:
                nn[i] = _row_min(dist, ids, active, i)
            else:
                j = nn[i]
                if _key_less(
                    dist[i, p], min(ids[i], ids[p]), max(ids[i], ids[p]),
                    dist[i, j], min(ids[i], ids[j]), max(ids[i], ids[j]),
                ):
                    nn[i] = p

    if with_values:
        for i in range(n):
            out[i, i] = 1.0
    return left, right, heights, counts, out


def _square(d: ArrayLike, what: str) -> Array:
    m = np.ascontiguousarray(d, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"expected a square {what}, got shape {m.shape}")
    if m.shape[0] < 2:
        raise DataError("need at least two objects to cluster")
    return m


def average_linkage(d: ArrayLike) -> Dendrogram:
    """UPGMA clustering of a distance matrix.

    Inter-cluster distances are updated with the size-weighted
    Lance-Williams rule, which reproduces the mean pairwise distance between
    clusters.  Among pairs at exactly the minimal distance, the pair with the
    lexicographically smallest ``(min id, max id)`` is merged.
    """
    dist = _square(d, "distance matrix")
    left, right, heights, counts, _ = _upgma(dist, dist, False)
    return Dendrogram(left, right, heights, counts)


def _block_mean(block: Array) -> float:
    first = block.flat[0]
    # constant blocks keep their exact value so that refiltering is a fixed point
    if np.all(block == first):
        return float(first)
    return float(block.mean())


def hcal_filter(c: ArrayLike, dendrogram: Dendrogram | None = None) -> Array:
    """Hierarchical clustering average-linkage filter of a correlation matrix.

    Each block of pairs joined by one merge is replaced by its mean
    correlation, i.e. by one minus the merge height.  A block whose entries
    are all equal keeps that exact value.  Pass ``dendrogram`` to reuse a
    clustering already computed on ``1 - c``.
    """
    c = _square(c, "correlation matrix")
    if dendrogram is None:
        return _upgma(correlation_to_distance(c), c, True)[4]
    out = np.empty_like(c)
    for a, b, _ in dendrogram.merge_blocks():
        v = _block_mean(c[np.ix_(a, b)])
        out[np.ix_(a, b)] = v
        out[np.ix_(b, a)] = v
    np.fill_diagonal(out, 1.0)
    return out


def cophenetic_matrix(dendrogram: Dendrogram) -> Array:
    """Height of the merge at which each pair of leaves first shares a cluster."""
    n = dendrogram.n_leaves
    out = np.zeros((n, n))
    for a, b, h in dendrogram.merge_blocks():
        out[np.ix_(a, b)] = h
        out[np.ix_(b, a)] = h
    return out


def cophenetic_correlation(a: Dendrogram, b: Dendrogram) -> float:
    """Pearson correlation between the two cophenetic matrices' lower triangles."""
    if a.n_leaves != b.n_leaves:
        raise DataError("dendrograms are built on different numbers of leaves")
    il = np.tril_indices(a.n_leaves, -1)
    x = cophenetic_matrix(a)[il]
    y = cophenetic_matrix(b)[il]
    x = x - x.mean()
    y = y - y.mean()
    sx = np.sqrt(x @ x)
    sy = np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        raise DataError("cophenetic correlation undefined: a cophenetic matrix is constant")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))
