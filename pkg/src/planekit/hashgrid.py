"""Uniform spatial hash grid for fixed-radius and nearest-neighbor queries.

Works for 2D and 3D point sets.  Distances are plain float64
``((a - b) ** 2).sum()`` values, so results are bit-identical to a
brute-force scan over the same points (no approximate math, no RNG).
"""

from __future__ import annotations

import numpy as np

_CHUNK = 65536          # queries per internal batch, bounds peak memory
_BRUTE_FALLBACK = 9     # ring reach beyond which we brute-force the stragglers


class HashGrid:
    """Points bucketed into cubic cells of size ``cell``."""

    def __init__(self, points, cell: float):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if cell <= 0:
            raise ValueError("cell must be positive")
        self.points = pts
        self.cell = float(cell)
        self.dim = pts.shape[1]
        if len(pts) == 0:
            raise ValueError("empty point set")
        self.origin = pts.min(axis=0)
        idx = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        self._shape = idx.max(axis=0) + 1
        self._strides = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            self._strides[k] = self._strides[k + 1] * self._shape[k + 1]
        keys = idx @ self._strides
        self._order = np.argsort(keys, kind="stable")
        self._keys = keys[self._order]

    def _cells_of(self, queries) -> np.ndarray:
        return np.floor((queries - self.origin) / self.cell).astype(np.int64)

    def _gather(self, qcells, reach: int):
        """Candidate (query row, point index) pairs from the +-reach cell block."""
        m = len(qcells)
        ranges = [np.arange(-reach, reach + 1)] * self.dim
        mesh = np.meshgrid(*ranges, indexing="ij")
        offsets = np.stack([g.ravel() for g in mesh], axis=1)

        q_out, p_out = [], []
        for off in offsets:
            cells = qcells + off
            valid = np.all((cells >= 0) & (cells < self._shape), axis=1)
            if not valid.any():
                continue
            keys = cells[valid] @ self._strides
            lo = np.searchsorted(self._keys, keys, side="left")
            hi = np.searchsorted(self._keys, keys, side="right")
            counts = hi - lo
            total = int(counts.sum())
            if total == 0:
                continue
            rows = np.repeat(np.flatnonzero(valid), counts)
            starts = np.repeat(lo, counts)
            shift = np.repeat(np.cumsum(counts) - counts, counts)
            slots = starts + (np.arange(total) - shift)
            q_out.append(rows)
            p_out.append(self._order[slots])
        if not q_out:
            return (np.empty(0, dtype=np.int64),) * 2
        return np.concatenate(q_out), np.concatenate(p_out)

    def pairs_within(self, queries, radius: float):
        """All (query_idx, point_idx, squared_dist) with dist <= radius."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        reach = int(np.ceil(radius / self.cell))
        r2 = radius * radius
        qi_all, pi_all, d2_all = [], [], []
        for start in range(0, len(q), _CHUNK):
            chunk = q[start : start + _CHUNK]
            qc = self._cells_of(chunk)
            qi, pi = self._gather(qc, reach)
            if len(qi) == 0:
                continue
            diff = chunk[qi] - self.points[pi]
            d2 = (diff * diff).sum(axis=1)
            keep = d2 <= r2
            qi_all.append(qi[keep] + start)
            pi_all.append(pi[keep])
            d2_all.append(d2[keep])
        if not qi_all:
            z = np.empty(0, dtype=np.int64)
            return z, z.copy(), np.empty(0, dtype=np.float64)
        return np.concatenate(qi_all), np.concatenate(pi_all), np.concatenate(d2_all)

    def nearest(self, queries):
        """Exact nearest neighbor: (distances, point indices).

        Expanding ring search; queries that stay unresolved past a few rings
        fall back to a brute-force scan (rare, only for far-away queries).
        """
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        m = len(q)
        best_d2 = np.full(m, np.inf)
        best_ix = np.full(m, -1, dtype=np.int64)

        for start in range(0, m, _CHUNK):
            chunk = q[start : start + _CHUNK]
            cm = len(chunk)
            cd2 = np.full(cm, np.inf)
            cix = np.full(cm, np.iinfo(np.int64).max)  # sentinel for minimum.at
            todo = np.arange(cm)
            qc = self._cells_of(chunk)
            reach = 1
            while len(todo):
                if reach > _BRUTE_FALLBACK:
                    for row in todo:
                        diff = self.points - chunk[row]
                        d2 = (diff * diff).sum(axis=1)
                        j = int(np.argmin(d2))
                        cd2[row], cix[row] = d2[j], j
                    break
                qi, pi = self._gather(qc[todo], reach)
                if len(qi):
                    rows = todo[qi]
                    diff = chunk[rows] - self.points[pi]
                    d2 = (diff * diff).sum(axis=1)
                    np.minimum.at(cd2, rows, d2)
                    hit = d2 == cd2[rows]
                    np.minimum.at(cix, rows[hit], pi[hit])
                guarantee = (reach * self.cell) ** 2
                todo = todo[cd2[todo] > guarantee]
                reach *= 2
            cix[cd2 == np.inf] = -1
            best_d2[start : start + cm] = cd2
            best_ix[start : start + cm] = cix

        return np.sqrt(best_d2), best_ix
