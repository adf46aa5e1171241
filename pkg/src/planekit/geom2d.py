"""2D geometry kernels used by the mesh refinement stages.

Everything here works in a local plane frame: convex hulls, minimum
enclosing rectangles (rotating calipers), occupancy rasters and a
Bowyer-Watson Delaunay triangulator.  All routines are deterministic;
none of them draws random numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Relative tolerances, all scale-free: multiplied by a squared extent where used.
COLLINEAR_EPS = 1e-14     # squared-scale cross product threshold
TRI_AREA_EPS = 1e-14      # minimum triangle area relative to scale^2
DEDUP_TOL = 1e-9          # points closer than this are treated as one


class DegenerateInputError(ValueError):
    """Raised when a geometric routine receives collinear/empty input."""


# ---------------------------------------------------------------------------
# Plane frames
# ---------------------------------------------------------------------------

@dataclass
class PlaneFrame:
    """Orthonormal 2D coordinate frame embedded in a 3D plane.

    u x v equals the plane normal, so CCW triangles in frame coordinates
    have 3D normals aligned with the plane normal.
    """

    origin: np.ndarray  # (3,)
    u: np.ndarray       # (3,) unit
    v: np.ndarray       # (3,) unit, orthogonal to u

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u, self.v)

    @classmethod
    def from_normal(cls, normal, origin) -> "PlaneFrame":
        """Build a deterministic frame for a plane given its unit normal."""
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        # pick the world axis least aligned with n (lowest index on ties)
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        u = e - n * n[k]
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        return cls(origin=np.asarray(origin, dtype=np.float64), u=u, v=v)

    def to_2d(self, points3) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points3, dtype=np.float64)) - self.origin
        return np.stack([p @ self.u, p @ self.v], axis=1)

    def to_3d(self, points2) -> np.ndarray:
        q = np.atleast_2d(np.asarray(points2, dtype=np.float64))
        return self.origin + q[:, :1] * self.u + q[:, 1:2] * self.v


# ---------------------------------------------------------------------------
# Convex hull (Andrew monotone chain)
# ---------------------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Indices of the convex hull of 2D points, CCW, collinear points excluded.

    Starts at the lexicographically smallest point.  Raises
    DegenerateInputError when all points are collinear.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected (N, 2) array")
    n = len(pts)
    if n < 3:
        raise DegenerateInputError("convex hull needs at least 3 points")

    order = np.lexsort((pts[:, 1], pts[:, 0]))

    def half(indices):
        chain: list[int] = []
        for i in indices:
            while len(chain) >= 2 and _cross(pts[chain[-2]], pts[chain[-1]], pts[i]) <= 0.0:
                chain.pop()
            chain.append(i)
        return chain

    lower = half(order)
    upper = half(order[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInputError("all points collinear")
    return np.asarray(hull, dtype=np.int64)


# ---------------------------------------------------------------------------
# Minimum enclosing rectangle (rotating calipers)
# ---------------------------------------------------------------------------

@dataclass
class Rect2:
    """Oriented rectangle: center, two orthonormal axis rows, half extents.

    axes[0] is the long axis; its angle lies in [0, pi).
    """

    center: np.ndarray        # (2,)
    axes: np.ndarray          # (2, 2), rows orthonormal, right-handed
    half_extents: np.ndarray  # (2,), half_extents[0] >= half_extents[1]

    @property
    def area(self) -> float:
        return float(4.0 * self.half_extents[0] * self.half_extents[1])

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        q = (np.atleast_2d(points) - self.center) @ self.axes.T
        return np.all(np.abs(q) <= self.half_extents + tol, axis=1)

    def corners(self) -> np.ndarray:
        signs = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)
        return self.center + (signs * self.half_extents) @ self.axes


def min_enclosing_rect(points) -> Rect2:
    """Minimum-area enclosing rectangle of a 2D point set.

    One side of the optimum is collinear with a hull edge, so only hull-edge
    directions are tried.  Ties keep the first (lowest) hull edge.
    """
    pts = np.asarray(points, dtype=np.float64)
    hull = convex_hull(pts)
    hp = pts[hull]
    edges = np.roll(hp, -1, axis=0) - hp
    angles = np.arctan2(edges[:, 1], edges[:, 0])

    best = None
    for theta in angles:
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, s], [-s, c]])
        q = hp @ rot.T
        lo = q.min(axis=0)
        hi = q.max(axis=0)
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        if best is None or area < best[0]:
            best = (area, theta, lo, hi)

    _, theta, lo, hi = best
    c, s = np.cos(theta), np.sin(theta)
    axes = np.array([[c, s], [-s, c]])
    half = (hi - lo) / 2.0
    center2 = (lo + hi) / 2.0 @ axes  # rotate midpoint back to world

    if half[1] > half[0]:
        axes = axes[::-1].copy()
        half = half[::-1]
    # canonical direction: angle of the long axis in [0, pi)
    if axes[0, 1] < 0 or (axes[0, 1] == 0 and axes[0, 0] < 0):
        axes[0] = -axes[0]
    axes[1] = (-axes[0, 1], axes[0, 0])  # right-handed v = rot90(u)
    return Rect2(center=center2, axes=axes, half_extents=half.copy())


# ---------------------------------------------------------------------------
# Occupancy raster
# ---------------------------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Boolean raster of which cells are near an input point.

    Queries outside the raster report free.
    """

    origin: np.ndarray  # (2,) world coords of cell (0, 0) lower corner
    cell: float
    occupied: np.ndarray  # (nx, ny) bool

    def cell_index(self, points2) -> np.ndarray:
        q = (np.atleast_2d(points2) - self.origin) / self.cell
        return np.floor(q).astype(np.int64)

    def is_occupied(self, points2) -> np.ndarray:
        idx = self.cell_index(points2)
        nx, ny = self.occupied.shape
        inside = (
            (idx[:, 0] >= 0) & (idx[:, 0] < nx) & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
        )
        out = np.zeros(len(idx), dtype=bool)
        ii = idx[inside]
        out[inside] = self.occupied[ii[:, 0], ii[:, 1]]
        return out


def build_occupancy(points2, cell: float, stamp_radius: float) -> OccupancyGrid:
    """Stamp a disc of stamp_radius around every point onto a raster of cell size.

    A cell is occupied iff some input point lies within stamp_radius of its
    center.  Empty input yields an empty (all-free) grid.
    """
    if cell <= 0 or stamp_radius < cell / 2.0:
        raise ValueError("need cell > 0 and stamp_radius >= cell / 2")
    pts = np.atleast_2d(np.asarray(points2, dtype=np.float64))
    if pts.size == 0:
        return OccupancyGrid(origin=np.zeros(2), cell=cell, occupied=np.zeros((0, 0), dtype=bool))

    pad = stamp_radius + cell
    origin = pts.min(axis=0) - pad
    span = pts.max(axis=0) + pad - origin
    nx = int(np.ceil(span[0] / cell)) + 1
    ny = int(np.ceil(span[1] / cell)) + 1
    occupied = np.zeros((nx, ny), dtype=bool)

    # disc template of cell offsets; refined against true centers per point
    reach = int(np.ceil(stamp_radius / cell)) + 1
    off = np.arange(-reach, reach + 1)
    ox, oy = np.meshgrid(off, off, indexing="ij")
    template = np.stack([ox.ravel(), oy.ravel()], axis=1)

    base = np.floor((pts - origin) / cell).astype(np.int64)
    cells = base[:, None, :] + template[None, :, :]          # (N, T, 2)
    centers = origin + (cells + 0.5) * cell
    near = np.einsum("ntk,ntk->nt", centers - pts[:, None, :], centers - pts[:, None, :])
    hit = cells[near <= stamp_radius * stamp_radius]
    ok = (hit[:, 0] >= 0) & (hit[:, 0] < nx) & (hit[:, 1] >= 0) & (hit[:, 1] < ny)
    hit = hit[ok]
    occupied[hit[:, 0], hit[:, 1]] = True
    return OccupancyGrid(origin=origin, cell=cell, occupied=occupied)


# ---------------------------------------------------------------------------
# Delaunay triangulation (Bowyer-Watson)
# ---------------------------------------------------------------------------

@dataclass
class Tri2Mesh:
    """2D triangulation; triangles are CCW index triples into points2."""

    points2: np.ndarray    # (N, 2)
    triangles: np.ndarray  # (M, 3) int

    def areas(self) -> np.ndarray:
        p = self.points2[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))


def merge_close_points(points2, tol: float = DEDUP_TOL):
    """Collapse points closer than tol; returns (unique_points, map old->unique)."""
    pts = np.asarray(points2, dtype=np.float64)
    q = np.round(pts / tol).astype(np.int64)
    _, first, inverse = np.unique(q, axis=0, return_index=True, return_inverse=True)
    return pts[first], first, inverse


def _circumcircle(a, b, c):
    """Circumcenter and squared radius of triangle (a, b, c)."""
    d = 2.0 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    if d == 0.0:
        return np.array([np.inf, np.inf]), np.inf
    b2 = (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2
    c2 = (c[0] - a[0]) ** 2 + (c[1] - a[1]) ** 2
    ux = (c[1] - a[1]) * b2 - (b[1] - a[1]) * c2
    uy = (b[0] - a[0]) * c2 - (c[0] - a[0]) * b2
    cc = np.array([a[0] + ux / d, a[1] + uy / d])
    r2 = (cc[0] - a[0]) ** 2 + (cc[1] - a[1]) ** 2
    return cc, r2


def delaunay(points2) -> Tri2Mesh:
    """Incremental Bowyer-Watson triangulation closed by an implicit
    vertex at infinity.

    Points are inserted in input order, which also settles cocircular
    ties.  Hull edges are carried by pseudo-triangles that pair the edge
    with the infinite vertex, so conflict tests never touch far-away
    synthetic coordinates and the finite triangles tile the convex hull
    exactly.  In-circumcircle tests are evaluated in coordinates relative
    to the query point, which keeps hull-adjacent slivers at full
    precision.  Duplicates (within 1e-9) must be merged by the caller.
    Raises DegenerateInputError when all points are collinear.
    """
    pts = np.asarray(points2, dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise DegenerateInputError("triangulation needs at least 3 points")

    center = pts.mean(axis=0)
    spread = np.linalg.norm(pts - center, axis=1).max()
    if spread == 0.0:
        raise DegenerateInputError("all points coincide")
    d0 = pts[int(np.argmax(np.linalg.norm(pts - pts[0], axis=1)))] - pts[0]
    cr = np.abs((pts[:, 0] - pts[0, 0]) * d0[1] - (pts[:, 1] - pts[0, 1]) * d0[0])
    if cr.max() <= COLLINEAR_EPS * spread * spread:
        raise DegenerateInputError("all points collinear")

    INF = n

    # seed triangle: first point, first distinct point, first point off
    # their line; everything else is inserted in input order
    j1 = 1
    while (pts[j1] == pts[0]).all():
        j1 += 1
    e01 = pts[j1] - pts[0]
    turn = e01[0] * (pts[:, 1] - pts[0, 1]) - e01[1] * (pts[:, 0] - pts[0, 0])
    off_line = np.flatnonzero(turn != 0.0)
    off_line = off_line[(off_line != 0) & (off_line != j1)]
    if len(off_line) == 0:
        raise DegenerateInputError("all points collinear")
    j2 = int(off_line[0])
    i0, i1, i2 = 0, j1, j2
    if _cross(pts[i0], pts[i1], pts[i2]) < 0.0:
        i1, i2 = i2, i1

    cap = max(16, 4 * n)
    tris = np.empty((cap, 3), dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    infflag = np.zeros(cap, dtype=bool)
    n_alive = 0

    def push(count, ia, ib, ic):
        nonlocal tris, alive, infflag, n_alive
        if count == len(tris):
            grow = len(tris) * 2
            tris = np.resize(tris, (grow, 3))
            alive = np.resize(alive, grow)
            infflag = np.resize(infflag, grow)
            alive[count:] = False
        is_inf = INF in (ia, ib, ic)
        if not is_inf and _cross(pts[ia], pts[ib], pts[ic]) < 0.0:
            ib, ic = ic, ib
        tris[count] = (ia, ib, ic)
        alive[count] = True
        infflag[count] = is_inf
        n_alive += 1
        return count + 1

    count = push(0, i0, i1, i2)
    # hull pseudo-triangles store the reversed hull edge, so a query point
    # is in conflict exactly when it lies on the outer side of the edge
    for ea, eb in ((i0, i1), (i1, i2), (i2, i0)):
        count = push(count, eb, ea, INF)

    for pi in range(n):
        if pi == i0 or pi == j1 or pi == j2:
            continue
        # compact away dead rows so scans stay proportional to live size
        if count > 1024 and count > 2 * n_alive:
            live = np.flatnonzero(alive[:count])
            m = len(live)
            tris[:m] = tris[live]
            infflag[:m] = infflag[live]
            alive[:m] = True
            alive[m:count] = False
            count = m
        p = pts[pi]
        conflict = np.zeros(count, dtype=bool)

        fin = np.flatnonzero(alive[:count] & ~infflag[:count])
        if len(fin):
            v = pts[tris[fin]] - p
            sq = np.einsum("ijk,ijk->ij", v, v)
            ax, ay = v[:, 0, 0], v[:, 0, 1]
            bx, by = v[:, 1, 0], v[:, 1, 1]
            cx, cy = v[:, 2, 0], v[:, 2, 1]
            det = (sq[:, 0] * (bx * cy - by * cx)
                   - sq[:, 1] * (ax * cy - ay * cx)
                   + sq[:, 2] * (ax * by - ay * bx))
            conflict[fin] = det >= 0.0

        inf = np.flatnonzero(alive[:count] & infflag[:count])
        if len(inf):
            ti = tris[inf]
            u = np.where(ti[:, 0] == INF, ti[:, 1],
                         np.where(ti[:, 1] == INF, ti[:, 2], ti[:, 0]))
            w = np.where(ti[:, 0] == INF, ti[:, 2],
                         np.where(ti[:, 1] == INF, ti[:, 0], ti[:, 1]))
            e = pts[w] - pts[u]
            r = p - pts[u]
            conflict[inf] = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0] >= 0.0

        bad = np.flatnonzero(conflict)
        # cavity boundary: edges seen exactly once among bad triangles,
        # kept with the orientation of the triangle they came from
        edge_count: dict[tuple[int, int], tuple[int, int]] = {}
        for ti in bad:
            ia, ib, ic = tris[ti]
            for ea, eb in ((ia, ib), (ib, ic), (ic, ia)):
                key = (ea, eb) if ea < eb else (eb, ea)
                if key in edge_count:
                    edge_count.pop(key)
                else:
                    edge_count[key] = (ea, eb)
        alive[bad] = False
        n_alive -= len(bad)
        for ea, eb in edge_count.values():
            count = push(count, pi, ea, eb)

    keep = alive[:count] & np.all(tris[:count] != INF, axis=1)
    out = tris[:count][keep].copy()
    # collinear hull runs leave exactly-zero-area placeholder triangles
    p0, p1, p2 = pts[out[:, 0]], pts[out[:, 1]], pts[out[:, 2]]
    area2 = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
             - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    return Tri2Mesh(points2=pts, triangles=out[area2 != 0.0])


# ---------------------------------------------------------------------------
# Polygon helpers (used by the supportive-plane stage)
# ---------------------------------------------------------------------------

def polygon_area(loop2) -> float:
    """Signed shoelace area of a closed polygon (no repeated end vertex)."""
    p = np.asarray(loop2, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_polygon(points2, loop2) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over query points."""
    q = np.atleast_2d(np.asarray(points2, dtype=np.float64))
    poly = np.asarray(loop2, dtype=np.float64)
    x, y = q[:, 0], q[:, 1]
    inside = np.zeros(len(q), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    nxt = np.roll(np.arange(len(poly)), -1)
    for i, j in zip(range(len(poly)), nxt):
        crosses = (py[i] > y) != (py[j] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (px[j] - px[i]) * (y - py[i]) / (py[j] - py[i]) + px[i]
        inside ^= crosses & (x < xint)
    return inside
