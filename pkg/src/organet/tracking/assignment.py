"""Minimum-cost bipartite assignment (Hungarian method with row/column potentials)."""

from __future__ import annotations

import numpy as np


def _solve_square(cost: np.ndarray) -> np.ndarray:
    """Return ``col_of_row`` for a square matrix, O(n^3) shortest augmenting paths."""
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)  # 1-based; 0 = free
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            delta, j1 = inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def hungarian(cost_matrix) -> list[tuple[int, int]]:
    """Optimal (row, col) pairs, ``min(n, m)`` of them, for an n x m cost matrix.

    Rectangular inputs are padded to square with a sentinel larger than any
    real total; pairs touching the padding are dropped.
    """
    cost = np.asarray(cost_matrix, dtype=np.float64)
    if cost.size == 0:
        return []
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    n, m = cost.shape
    size = max(n, m)
    if n != m:
        sentinel = (np.abs(cost).max() + 1.0) * size
        padded = np.full((size, size), sentinel)
        padded[:n, :m] = cost
    else:
        padded = cost
    cols = _solve_square(padded)
    return [(i, int(cols[i])) for i in range(n) if cols[i] < m]


def assignment_cost(cost_matrix, pairs) -> float:
    cost = np.asarray(cost_matrix, dtype=np.float64)
    return float(sum(cost[i, j] for i, j in pairs))
