"""Plane fitting and the triangle-basis point parameterization.

A plane cluster is represented by three non-collinear basis points
(f1, f2, f3); every member point stores two barycentric weights (w1, w2)
with w3 = 1 - w1 - w2 implied.  Weights are affine, not convex: members
may lie outside the basis triangle.  Moving the basis moves all members
while keeping them exactly coplanar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom2d import DegenerateInputError

NORMAL_TOL = 1e-9        # |normal| must be unit within this
BASIS_AREA_REL = 1e-8    # min triangle area relative to max pair distance^2
RANSAC_ITERS = 512
_HYPO_CHUNK = 64         # hypotheses scored per vectorized block


@dataclass
class PlaneEq:
    """Plane as n . p + offset = 0 with |n| = 1."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.offset = float(self.offset)
        if abs(np.linalg.norm(self.normal) - 1.0) > NORMAL_TOL:
            raise ValueError("plane normal must be unit length")

    def signed_distance(self, points) -> np.ndarray:
        return np.atleast_2d(points) @ self.normal + self.offset


def canonical_sign(normal, offset):
    """Flip (n, d) so n_z >= 0, ties broken toward positive n_y then n_x."""
    n = np.asarray(normal, dtype=np.float64)
    flip = n[2] < 0 or (n[2] == 0 and (n[1] < 0 or (n[1] == 0 and n[0] < 0)))
    return (-n, -offset) if flip else (n, offset)


def fit_plane_lsq(points) -> PlaneEq:
    """Least-squares plane: smallest eigenvector of the point covariance."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    cov = (pts - centroid).T @ (pts - centroid)
    _, vecs = np.linalg.eigh(cov)
    n = vecs[:, 0]
    n = n / np.linalg.norm(n)
    n, d = canonical_sign(n, -float(n @ centroid))
    return PlaneEq(normal=n, offset=d)


def project_to_plane(points, plane: PlaneEq) -> np.ndarray:
    """Orthogonal projection p' = p - (n . p + d) n."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return pts - np.outer(plane.signed_distance(pts), plane.normal)


# ---------------------------------------------------------------------------
# RANSAC
# ---------------------------------------------------------------------------

def _collinear(points) -> bool:
    pts = np.asarray(points, dtype=np.float64)
    c = pts.mean(axis=0)
    cov = (pts - c).T @ (pts - c)
    vals = np.linalg.eigvalsh(cov)
    return vals[1] <= 1e-12 * max(vals[2], 1e-300)


def ransac_plane(points, inlier_dist: float, iters: int = RANSAC_ITERS, seed: int = 0):
    """RANSAC plane fit: (PlaneEq, inlier index array).

    Three-point hypotheses scored by inlier count (ties: smaller mean inlier
    distance), then a least-squares refit on the winning inliers.  Inliers
    are re-evaluated against the refit plane.
    """
    pts = np.asarray(points, dtype=np.float64)
    n_pts = len(pts)
    if n_pts < 3:
        raise ValueError("need at least 3 points")
    if _collinear(pts):
        raise DegenerateInputError("degenerate cluster")

    rng = np.random.default_rng(seed)
    triples = np.empty((iters, 3), dtype=np.int64)
    for i in range(iters):
        triples[i] = rng.choice(n_pts, size=3, replace=False)

    best_count = -1
    best_mean = np.inf
    best_inliers = None
    scale = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    for start in range(0, iters, _HYPO_CHUNK):
        t = triples[start : start + _HYPO_CHUNK]
        a, b, c = pts[t[:, 0]], pts[t[:, 1]], pts[t[:, 2]]
        normals = np.cross(b - a, c - a)
        norms = np.linalg.norm(normals, axis=1)
        ok = norms > 1e-12 * max(scale * scale, 1e-300)
        if not ok.any():
            continue
        normals = normals[ok] / norms[ok, None]
        dists = np.abs((pts @ normals.T) - np.einsum("ij,ij->i", normals, a[ok]))
        within = dists <= inlier_dist
        counts = within.sum(axis=0)
        for k in range(len(counts)):
            cnt = int(counts[k])
            if cnt == 0:
                continue
            mean = float(dists[within[:, k], k].mean())
            if cnt > best_count or (cnt == best_count and mean < best_mean):
                best_count, best_mean = cnt, mean
                best_inliers = np.flatnonzero(within[:, k])

    if best_inliers is None or len(best_inliers) < 3 or _collinear(pts[best_inliers]):
        raise DegenerateInputError("degenerate cluster")

    plane = fit_plane_lsq(pts[best_inliers])
    inliers = np.flatnonzero(np.abs(plane.signed_distance(pts)) <= inlier_dist)
    return plane, inliers


# ---------------------------------------------------------------------------
# Basis selection and barycentric coordinates
# ---------------------------------------------------------------------------

@dataclass
class PlaneBasis:
    """Three non-collinear points spanning a plane cluster."""

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    def __post_init__(self):
        self.f1 = np.asarray(self.f1, dtype=np.float64)
        self.f2 = np.asarray(self.f2, dtype=np.float64)
        self.f3 = np.asarray(self.f3, dtype=np.float64)
        if not basis_is_valid(self.f1, self.f2, self.f3):
            raise DegenerateInputError("collinear basis points")

    def as_array(self) -> np.ndarray:
        return np.stack([self.f1, self.f2, self.f3])

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.f2 - self.f1, self.f3 - self.f1)))

    def jacobian(self) -> np.ndarray:
        """d(point)/d(w1, w2): columns f1 - f3 and f2 - f3."""
        return np.stack([self.f1 - self.f3, self.f2 - self.f3], axis=1)

    def plane(self) -> PlaneEq:
        n = np.cross(self.f2 - self.f1, self.f3 - self.f1)
        n = n / np.linalg.norm(n)
        n, d = canonical_sign(n, -float(n @ self.f1))
        return PlaneEq(normal=n, offset=d)


def basis_is_valid(f1, f2, f3) -> bool:
    area = 0.5 * np.linalg.norm(np.cross(f2 - f1, f3 - f1))
    dmax = max(
        np.linalg.norm(f1 - f2), np.linalg.norm(f1 - f3), np.linalg.norm(f2 - f3)
    )
    return dmax > 0 and area > BASIS_AREA_REL * dmax * dmax


def max_area_basis(points) -> PlaneBasis:
    """Deterministic fallback: farthest pair plus farthest-from-line point."""
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    a = int(np.argmax(((pts - centroid) ** 2).sum(axis=1)))
    b = int(np.argmax(((pts - pts[a]) ** 2).sum(axis=1)))
    d = pts[b] - pts[a]
    ln = np.linalg.norm(d)
    if ln == 0:
        raise DegenerateInputError("all points coincide")
    c = int(np.argmax(np.linalg.norm(np.cross(pts - pts[a], d / ln), axis=1)))
    return PlaneBasis(f1=pts[a], f2=pts[b], f3=pts[c])


def select_basis(points, seed: int = 0, max_draws: int = 64) -> PlaneBasis:
    """Pick a well-spread basis triple from coplanar points.

    Random triples are drawn with a seeded generator; the first one passing
    the non-collinearity check wins.  After max_draws failures the
    deterministic max-area heuristic takes over.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if len(pts) == 3:
        return PlaneBasis(f1=pts[0], f2=pts[1], f3=pts[2])
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        i, j, k = rng.choice(len(pts), size=3, replace=False)
        if basis_is_valid(pts[i], pts[j], pts[k]):
            return PlaneBasis(f1=pts[i], f2=pts[j], f3=pts[k])
    return max_area_basis(pts)


@dataclass
class BarycentricPoint:
    """Affine weights over a PlaneBasis; w3 = 1 - w1 - w2 is implied."""

    w1: float
    w2: float

    @property
    def w3(self) -> float:
        return 1.0 - self.w1 - self.w2


def to_barycentric(points, basis: PlaneBasis) -> np.ndarray:
    """(N, 2) barycentric weights of on-plane points.

    Solved through a QR factorization of the 3x2 basis Jacobian, which keeps
    the round-trip error near cond(J) * eps even for thin triangles.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    jac = basis.jacobian()
    q, r = np.linalg.qr(jac)
    if abs(r[0, 0]) == 0 or abs(r[1, 1]) == 0:
        raise DegenerateInputError("collinear basis points")
    rhs = (pts - basis.f3) @ q
    return np.linalg.solve(r, rhs.T).T


def from_barycentric(weights, basis: PlaneBasis) -> np.ndarray:
    """Reconstruct points: w1 f1 + w2 f2 + (1 - w1 - w2) f3."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    w3 = 1.0 - w[:, 0] - w[:, 1]
    return np.outer(w[:, 0], basis.f1) + np.outer(w[:, 1], basis.f2) + np.outer(w3, basis.f3)
