"""Exact minimum-cost assignment by shortest augmenting paths.

Rows are inserted one at a time; each insertion runs a Dijkstra-like search
over reduced costs maintained by dual potentials ``u`` (rows) and ``v``
(columns). The inner column scan is vectorized, so the cost is ``O(n^2 m)``
arithmetic with ``O(n m)`` Python-level overhead only in the number of
search steps.
"""

from __future__ import annotations

import numpy as np

from hklapse.errors import DomainError


def solve_assignment(cost) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(rows, cols, total)`` of a minimum-cost assignment.

    ``cost`` is an ``(n, m)`` finite matrix. Every row is matched when
    ``n <= m``, every column otherwise; ``rows`` is sorted.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise DomainError("cost must be a 2-D matrix")
    if C.size == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int), 0.0
    if not np.all(np.isfinite(C)):
        raise DomainError("cost must be finite")
    if C.shape[0] > C.shape[1]:
        cols, rows, _ = solve_assignment(C.T)
        order = np.argsort(rows)
        rows, cols = rows[order], cols[order]
        return rows, cols, float(C[rows, cols].sum())

    n, m = C.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: 1-based row matched to column j; 0 is the virtual column
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    cols = np.nonzero(p[1:])[0]
    rows = p[1:][cols] - 1
    order = np.argsort(rows)
    rows, cols = rows[order], cols[order]
    return rows, cols, float(C[rows, cols].sum())
