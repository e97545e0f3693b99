"""Dynamic time warping between the satellite series and the ground extrema.

The local cost is the absolute difference, steps are (1,0), (0,1) and (1,1),
both sequence ends are pinned, and no band constraint is applied. Indices are
0-based throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError

BRUTE_FORCE_MAX = 14


@dataclass(frozen=True)
class AlignmentMatrix:
    cells: np.ndarray
    total_cost: float
    path: tuple[tuple[int, int], ...]

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @classmethod
    def from_path(cls, path, n: int, m: int, total_cost: float) -> "AlignmentMatrix":
        cells = np.zeros((n, m), dtype=bool)
        for i, j in path:
            cells[i, j] = True
        return cls(cells, total_cost, tuple(path))

    def check(self) -> None:
        """Raise ``AssertionError`` unless the cells form a valid warping path."""
        n, m = self.cells.shape
        path = self.path
        assert path[0] == (0, 0) and path[-1] == (n - 1, m - 1), "boundary cells"
        for (i0, j0), (i1, j1) in zip(path, path[1:]):
            assert (i1 - i0, j1 - j0) in ((1, 0), (0, 1), (1, 1)), "step pattern"
        assert int(self.cells.sum()) == len(path), "cells match path"
        assert self.cells.any(axis=1).all() and self.cells.any(axis=0).all(), "coverage"


def _as_sequence(x, name) -> list[float]:
    seq = [float(v) for v in np.asarray(x, dtype=np.float64).ravel()]
    if not seq:
        raise AlignmentError(f"DTW input {name} is empty")
    return seq


def dtw_align(u, v) -> AlignmentMatrix:
    """Classical DTW; one optimal path is recovered by backtracking.

    Ties are broken in favour of the diagonal predecessor, then the one that
    advanced ``u``, then the one that advanced ``v``.
    """
    u = _as_sequence(u, "u")
    v = _as_sequence(v, "v")
    n, m = len(u), len(v)
    inf = float("inf")
    acc = [[inf] * m for _ in range(n)]
    for i in range(n):
        ui = u[i]
        row = acc[i]
        prev = acc[i - 1] if i else None
        for j in range(m):
            c = abs(ui - v[j])
            if i == 0 and j == 0:
                row[j] = c
                continue
            best = inf
            if prev is not None:
                if j:
                    best = prev[j - 1]
                best = min(best, prev[j])
            if j:
                best = min(best, row[j - 1])
            row[j] = c + best

    i, j = n - 1, m - 1
    path = [(i, j)]
    while i or j:
        options = []
        if i and j:
            options.append((acc[i - 1][j - 1], i - 1, j - 1))
        if i:
            options.append((acc[i - 1][j], i - 1, j))
        if j:
            options.append((acc[i][j - 1], i, j - 1))
        best = min(o[0] for o in options)
        _, i, j = next(o for o in options if o[0] == best)
        path.append((i, j))
    path.reverse()
    return AlignmentMatrix.from_path(path, n, m, acc[n - 1][m - 1])


def dtw_brute_force(u, v) -> tuple[float, list[tuple[int, int]]]:
    """Minimum DTW cost by enumerating every admissible warping path.

    Path costs are accumulated from the start in path order. Test oracle only.
    """
    u = _as_sequence(u, "u")
    v = _as_sequence(v, "v")
    n, m = len(u), len(v)
    if n + m > BRUTE_FORCE_MAX:
        raise AlignmentError(f"brute force limited to n + m <= {BRUTE_FORCE_MAX}, got {n + m}")
    best_cost = float("inf")
    best_path: list[tuple[int, int]] = []

    def walk(i, j, cost, path):
        nonlocal best_cost, best_path
        cost = cost + abs(u[i] - v[j])
        path.append((i, j))
        if i == n - 1 and j == m - 1:
            if cost < best_cost:
                best_cost, best_path = cost, list(path)
        else:
            for di, dj in ((1, 1), (1, 0), (0, 1)):
                if i + di < n and j + dj < m:
                    walk(i + di, j + dj, cost, path)
        path.pop()

    walk(0, 0, 0.0, [])
    return best_cost, best_path


def matched_columns(A: AlignmentMatrix, i: int) -> list[int]:
    """Columns of ``v`` aligned with row ``i`` of ``u``, ascending."""
    if not 0 <= i < A.rows:
        raise IndexError(f"row {i} out of range for {A.rows} rows")
    return np.flatnonzero(A.cells[i]).tolist()


def write_alignment_csv(path, A: AlignmentMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# total_cost={A.total_cost!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in A.cells.astype(int).tolist():
            w.writerow(row)


def read_alignment_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return np.array([[int(c) for c in r.strip().split(",")] for r in rows], dtype=bool)
