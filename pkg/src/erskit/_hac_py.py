"""Pure numpy implementation of the clustering kernels.

Used when the compiled ``_hac_ext`` module is unavailable (or when
``ERSKIT_PURE_PYTHON=1``). The merge loop is the same algorithm as the
Cython kernel and performs the same floating point operations in the same
order, so given the same distance matrix both backends produce bitwise
identical merge sequences.
"""

from __future__ import annotations

import numpy as np

SINGLE, COMPLETE, AVERAGE = 0, 1, 2

_ROW_BLOCK = 512


def pairwise_chordal(X, workers=1):
    """Full symmetric ``(n, n)`` chordal distance matrix of unit rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    D = np.empty((n, n), dtype=np.float64)
    for lo in range(0, n, _ROW_BLOCK):
        hi = min(n, lo + _ROW_BLOCK)
        blk = D[lo:hi]
        np.matmul(X[lo:hi], X.T, out=blk)
        np.clip(blk, -1.0, 1.0, out=blk)
        blk *= -2.0
        blk += 2.0
        np.maximum(blk, 0.0, out=blk)
        np.sqrt(blk, out=blk)
    # matmul is not guaranteed to be bitwise symmetric
    for i in range(n):
        D[i, :i] = D[:i, i]
        D[i, i] = 0.0
    return D


def _row_nn(D, i, n):
    if i >= n - 1:
        return -1, np.inf
    row = D[i, i + 1:]
    j = int(np.argmin(row))
    d = float(row[j])
    if d == np.inf:
        return -1, np.inf
    return i + 1 + j, d


def hac_merge(D, threshold, linkage):
    """Greedy agglomerative merge loop over the upper triangle of ``D``.

    ``D`` is overwritten. Rows are assumed to be pre-sorted by item id so
    the lexicographic tie rule reduces to comparing indices: among pairs at
    the minimum distance the pair ``(i, j)``, ``i < j``, with the smallest
    ``i`` and then the smallest ``j`` is merged. Merging stops once the
    smallest linkage distance exceeds ``threshold``.

    Returns:
        ``(labels, merges)`` where ``labels[k]`` is the smallest row index in
        the cluster of row ``k`` and ``merges`` is a ``(m, 3)`` float array of
        ``(a, b, distance)`` in merge order.
    """
    n = D.shape[0]
    active = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.float64)
    nn = np.full(n, -1, dtype=np.int64)
    mind = np.full(n, np.inf)
    for i in range(n - 1):
        nn[i], mind[i] = _row_nn(D, i, n)

    members = [[k] for k in range(n)]
    merges = []
    da = np.empty(n)
    db = np.empty(n)
    while True:
        a = int(np.argmin(mind))
        best = float(mind[a])
        if not best <= threshold:
            break
        b = int(nn[a])
        merges.append((a, b, best))

        da[:a] = D[:a, a]
        da[a:] = D[a, a:]
        db[:b] = D[:b, b]
        db[b:] = D[b, b:]
        if linkage == SINGLE:
            new = np.minimum(da, db)
        elif linkage == COMPLETE:
            new = np.maximum(da, db)
        else:
            na, nb = size[a], size[b]
            new = (na * da + nb * db) / (na + nb)
        # rows of merged-away clusters hold stale values; keep them dead
        new[~active] = np.inf
        D[:a, a] = new[:a]
        D[a, a + 1:] = new[a + 1:]
        D[a, b] = np.inf

        size[a] += size[b]
        active[b] = False
        mind[b] = np.inf
        nn[b] = -1
        D[:b, b] = np.inf
        members[a].extend(members[b])
        members[b] = []

        nn[a], mind[a] = _row_nn(D, a, n)

        head = np.flatnonzero(active[:b])
        stale = head[(nn[head] == a) | (nn[head] == b)]
        for i in stale:
            if i != a:
                nn[i], mind[i] = _row_nn(D, int(i), n)
        lower = head[head < a]
        if lower.size:
            lower = lower[(nn[lower] != a) & (nn[lower] != b)]
            c = D[lower, a]
            better = (c < mind[lower]) | ((c == mind[lower]) & (a < nn[lower]))
            upd = lower[better]
            nn[upd] = a
            mind[upd] = c[better]

    labels = np.empty(n, dtype=np.int64)
    for rep, mem in enumerate(members):
        if mem:
            labels[mem] = rep
    return labels, np.asarray(merges, dtype=np.float64).reshape(-1, 3)
