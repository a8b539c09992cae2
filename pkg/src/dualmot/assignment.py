"""Box geometry and exact linear assignment.

Shared by the metrics and the tracker. The solver is written here rather
than delegated so that tie-breaking is fixed by construction: rows are
processed in ascending index order and every argmin scan runs over
ascending column indices, so equal-cost alternatives always resolve to the
lowest row, then the lowest column. Optimality is cross-checked against a
brute-force permutation oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, top-left origin, (x, y) corner plus width/height."""

    x: float
    y: float
    w: float
    h: float

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Degenerate boxes (non-positive width or height on either side) score
    0.0 instead of raising, so callers can feed unfiltered detections.
    """
    if a.w <= 0.0 or a.h <= 0.0 or b.w <= 0.0 or b.h <= 0.0:
        return 0.0
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    # x2 = x + w rounds, so inter can exceed union by ~1 ulp for identical
    # boxes; the true ratio never exceeds 1
    return min(1.0, inter / union)


def iou_matrix(rows: list[Box] | tuple[Box, ...], cols: list[Box] | tuple[Box, ...]) -> np.ndarray:
    """Pairwise IoU, shape (len(rows), len(cols)), float64."""
    nr, nc = len(rows), len(cols)
    out = np.zeros((nr, nc), dtype=np.float64)
    if nr == 0 or nc == 0:
        return out
    ax = np.array([[b.x, b.y, b.x2, b.y2, b.area] for b in rows])
    bx = np.array([[b.x, b.y, b.x2, b.y2, b.area] for b in cols])
    iw = np.minimum(ax[:, None, 2], bx[None, :, 2]) - np.maximum(ax[:, None, 0], bx[None, :, 0])
    ih = np.minimum(ax[:, None, 3], bx[None, :, 3]) - np.maximum(ax[:, None, 1], bx[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = ax[:, None, 4] + bx[None, :, 4] - inter
    good = (ax[:, None, 4] > 0.0) & (bx[None, :, 4] > 0.0) & (union > 0.0)
    np.divide(inter, union, out=out, where=good)
    np.minimum(out, 1.0, out=out)
    return out


@dataclass(frozen=True)
class Assignment:
    """Result of a minimization: (row, col) pairs plus their total cost."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def _solve_square(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment on a square cost matrix.

    Returns row_of_col: for each column j the row matched to it. Index n is
    a virtual column used while growing alternating paths.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.full(n + 1, -1, dtype=np.intp)
    for i in range(n):
        row_of_col[n] = i
        j_cur = n
        min_to = np.full(n, np.inf)
        prev_col = np.full(n, -1, dtype=np.intp)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j_cur] = True
            i_cur = row_of_col[j_cur]
            free = ~used[:n]
            reduced = cost[i_cur, :] - u[i_cur] - v[:n]
            better = free & (reduced < min_to)
            min_to[better] = reduced[better]
            prev_col[better] = j_cur
            free_idx = np.flatnonzero(free)
            # np.argmin keeps the first minimum, i.e. the lowest column index
            j_next = free_idx[np.argmin(min_to[free_idx])]
            delta = min_to[j_next]
            used_cols = np.flatnonzero(used)
            u[row_of_col[used_cols]] += delta
            v[used_cols] -= delta
            min_to[free] -= delta
            j_cur = j_next
            if row_of_col[j_cur] == -1:
                break
        while j_cur != n:
            j_prev = prev_col[j_cur]
            row_of_col[j_cur] = row_of_col[j_prev]
            j_cur = j_prev
    return row_of_col[:n]


def hungarian(cost_matrix) -> Assignment:
    """Minimum-cost assignment over a rectangular real matrix.

    Rectangular inputs are padded to square with a finite constant strictly
    greater than every real entry; pairs touching padding are dropped, so
    exactly min(rows, cols) pairs come back. An empty matrix yields the
    empty assignment with cost 0.0.
    """
    cost = np.asarray(cost_matrix, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix entries must be finite")
    nr, nc = cost.shape
    if nr == 0 or nc == 0:
        return Assignment(pairs=(), total_cost=0.0)
    n = max(nr, nc)
    if nr == nc:
        padded = cost
    else:
        padded = np.full((n, n), float(cost.max()) + 1.0)
        padded[:nr, :nc] = cost
    row_of_col = _solve_square(padded)
    pairs = sorted((int(row_of_col[j]), j) for j in range(n)
                   if row_of_col[j] < nr and j < nc)
    total = float(sum(cost[i, j] for i, j in pairs))
    return Assignment(pairs=tuple(pairs), total_cost=total)


def match_with_threshold(sim_matrix, threshold: float) -> tuple[tuple[int, int], ...]:
    """One-to-one matching maximizing total similarity over pairs >= threshold.

    Entries below the threshold are never matched; leaving a row or column
    unmatched is free. Returned pairs are sorted by row index.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    sim = np.asarray(sim_matrix, dtype=np.float64)
    if sim.ndim != 2:
        raise ValueError("similarity matrix must be 2-D")
    nr, nc = sim.shape
    if nr == 0 or nc == 0:
        return ()
    allowed = sim >= threshold
    if not allowed.any():
        return ()
    n = max(nr, nc)
    # zero cost everywhere means "unmatched" is free; eligible pairs earn -sim
    cost = np.zeros((n, n))
    cost[:nr, :nc][allowed] = -sim[allowed]
    result = hungarian(cost)
    return tuple((i, j) for i, j in result.pairs
                 if i < nr and j < nc and allowed[i, j])
