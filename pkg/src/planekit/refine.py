"""Plane-guided mesh refinement.

Dense near-planar regions of a reconstructed mesh are replaced by flat
patches: cluster vertices are assigned to planes by proximity to the
plane's cloud points, interior vertices are deleted, and the region is
rebuilt from a regular in-plane grid plus the retained boundary,
Delaunay-triangulated in the plane frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geom2d import (
    DegenerateInputError,
    PlaneFrame,
    build_occupancy,
    convex_hull,
    delaunay,
    merge_close_points,
    min_enclosing_rect,
    points_in_polygon,
)
from .hashgrid import HashGrid
from .mesh import TriMesh
from .planefit import project_to_plane

log = logging.getLogger(__name__)

ASSIGN_NEAR = 1.5   # membership band, in units of delta
ASSIGN_FAR = 0.5    # exclusion band, in units of delta
GRID_DIVISIONS = 64         # default grid pitch = longer MER side / this
GRID_MIN_DELTA_FACTOR = 4.0  # ... but never below 4 * delta
STAMP_EDGE_FACTOR = 1.1      # occupancy stamp = this * median region edge
GRID_CLEARANCE = 0.45        # drop grid points closer than this * pitch to kept vertices


@dataclass
class PlaneVertexCluster:
    """Vertices of one plane region; boundary/interior filled by
    classify_boundary_interior."""

    plane_id: int
    vertices: np.ndarray
    boundary: np.ndarray = None
    interior: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.unique(np.asarray(self.vertices, dtype=np.int64))
        if self.boundary is None:
            self.boundary = np.empty(0, dtype=np.int64)
        if self.interior is None:
            self.interior = np.empty(0, dtype=np.int64)


def assign_vertices(mesh: TriMesh, plane_points, delta: float):
    """Assign each mesh vertex to at most one plane by cloud proximity.

    plane_points: sequence of per-plane (K, 3) cloud point arrays (index =
    plane id).  A vertex joins plane A when some A point lies strictly
    within 1.5*delta and every other plane's points stay strictly beyond
    0.5*delta.  If two planes both pass the near test, the closer one wins
    (lower id on an exact tie).  Returns one PlaneVertexCluster per plane
    (membership only).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    plane_points = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in plane_points]
    n_planes = len(plane_points)
    nv = mesh.n_vertices
    if n_planes == 0 or nv == 0:
        return [PlaneVertexCluster(plane_id=i, vertices=[]) for i in range(n_planes)]

    cloud = np.concatenate(plane_points)
    owner = np.repeat(
        np.arange(n_planes, dtype=np.int64), [len(p) for p in plane_points]
    )
    near = ASSIGN_NEAR * delta
    grid = HashGrid(cloud, cell=near)
    qi, pi, d2 = grid.pairs_within(mesh.vertices, near)

    # per (vertex, plane) minimum squared distance
    dmin = np.full((nv, n_planes), np.inf)
    np.minimum.at(dmin.ravel(), qi * n_planes + owner[pi], d2)

    order = np.argsort(dmin, axis=1, kind="stable")  # ties -> lower plane id
    best = order[:, 0]
    d1 = dmin[np.arange(nv), best]
    d2nd = (
        dmin[np.arange(nv), order[:, 1]] if n_planes > 1 else np.full(nv, np.inf)
    )
    assigned = (d1 < near * near) & (d2nd > (ASSIGN_FAR * delta) ** 2)
    return [
        PlaneVertexCluster(plane_id=i, vertices=np.flatnonzero(assigned & (best == i)))
        for i in range(n_planes)
    ]


def classify_boundary_interior(mesh: TriMesh, cluster: PlaneVertexCluster):
    """Boundary = cluster vertices sharing a mesh edge with a non-cluster
    vertex; interior = the rest."""
    member = np.zeros(mesh.n_vertices, dtype=bool)
    member[cluster.vertices] = True
    e = mesh.edges()
    frontier = member[e[:, 0]] != member[e[:, 1]]
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[e[frontier].ravel()] = True
    boundary_mask = member & touched
    boundary = np.flatnonzero(boundary_mask)
    interior = np.flatnonzero(member & ~boundary_mask)
    return PlaneVertexCluster(
        plane_id=cluster.plane_id,
        vertices=cluster.vertices,
        boundary=boundary,
        interior=interior,
    )


def region_face_mask(mesh: TriMesh, cluster: PlaneVertexCluster) -> np.ndarray:
    member = np.zeros(mesh.n_vertices, dtype=bool)
    member[cluster.vertices] = True
    return member[mesh.faces].all(axis=1)


def remove_planar_faces(mesh: TriMesh, cluster: PlaneVertexCluster) -> TriMesh:
    """Drop faces whose three vertices all belong to the cluster; vertices stay."""
    keep = ~region_face_mask(mesh, cluster)
    return TriMesh(mesh.vertices, mesh.faces[keep], mesh.labels)


def region_frame(mesh: TriMesh, cluster: PlaneVertexCluster, basis) -> PlaneFrame:
    """Plane frame for the region, oriented with the original surface.

    The frame normal is the basis-plane normal flipped, if needed, to agree
    with the area-weighted mean normal of the region's faces, so rebuilt
    triangles keep the region's winding.
    """
    plane = basis.plane()
    n = plane.normal
    fmask = region_face_mask(mesh, cluster)
    if fmask.any():
        f = mesh.faces[fmask]
        a, b, c = (mesh.vertices[f[:, k]] for k in range(3))
        mean = np.cross(b - a, c - a).sum(axis=0)
        if float(n @ mean) < 0:
            n = -n
    centroid = mesh.vertices[cluster.vertices].mean(axis=0)
    origin = project_to_plane(centroid[None, :], plane)[0]
    return PlaneFrame.from_normal(n, origin=origin)


@dataclass
class RegionResult:
    """Outcome of one region rebuild.

    vertex_map maps old vertex ids to new ones (-1 = deleted); patch_faces
    and new_vertices are (start, stop) ranges in the rebuilt mesh.
    """

    mesh: TriMesh
    vertex_map: np.ndarray
    patch_faces: tuple
    new_vertices: tuple
    skipped: bool = False
    reason: str = ""


def _skip(mesh, why) -> RegionResult:
    log.warning("region skipped: %s", why)
    n = mesh.n_vertices
    return RegionResult(
        mesh=mesh,
        vertex_map=np.arange(n, dtype=np.int64),
        patch_faces=(mesh.n_faces, mesh.n_faces),
        new_vertices=(n, n),
        skipped=True,
        reason=why,
    )


def rebuild_region(
    mesh: TriMesh,
    cluster: PlaneVertexCluster,
    basis,
    delta: float,
    grid_spacing: float | None = None,
    *,
    keep_ids=None,
    retain_ids=(),
    grid_filter: str = "occupancy",
    tri_filter: str = "occupancy",
    polygon_ids=None,
    frame: PlaneFrame | None = None,
) -> RegionResult:
    """Shared core: remove region faces, retriangulate on a plane grid.

    keep_ids: vertices kept AND used as triangulation input (moved onto the
    plane); defaults to the cluster boundary.  retain_ids: vertices kept in
    the mesh but excluded from the patch (contact-hole rims).  grid_filter /
    tri_filter: "occupancy" (stamp grid + convex hull), "polygon" (inside
    the polygon_ids loop), or "none".
    """
    plane = basis.plane()
    cluster = classify_boundary_interior(mesh, cluster)
    if len(cluster.vertices) < 3:
        return _skip(mesh, "cluster too small")
    if frame is None:
        frame = region_frame(mesh, cluster, basis)
    keep = np.unique(np.asarray(
        cluster.boundary if keep_ids is None else keep_ids, dtype=np.int64
    ))
    retain = np.unique(np.asarray(retain_ids, dtype=np.int64)) if len(retain_ids) else np.empty(0, np.int64)
    keep = np.setdiff1d(keep, retain)
    if len(keep) and not np.isin(keep, cluster.vertices).all():
        raise ValueError("keep_ids must be cluster vertices")
    if len(retain) and not np.isin(retain, cluster.vertices).all():
        raise ValueError("retain_ids must be cluster vertices")

    proj3_all = project_to_plane(mesh.vertices[cluster.vertices], plane)
    proj2_all = frame.to_2d(proj3_all)
    try:
        rect = min_enclosing_rect(proj2_all)
    except DegenerateInputError:
        return _skip(mesh, "degenerate region (collinear projection)")

    l_max = 2.0 * rect.half_extents[0]
    gs = grid_spacing if grid_spacing is not None else max(
        GRID_MIN_DELTA_FACTOR * delta, l_max / GRID_DIVISIONS
    )
    ki = int(rect.half_extents[0] // gs)
    kj = int(rect.half_extents[1] // gs)
    oi = gs * np.arange(-ki, ki + 1)
    oj = gs * np.arange(-kj, kj + 1)
    gi, gj = np.meshgrid(oi, oj, indexing="ij")
    grid2 = (
        rect.center
        + gi.reshape(-1, 1) * rect.axes[0]
        + gj.reshape(-1, 1) * rect.axes[1]
    )

    fmask = region_face_mask(mesh, cluster)
    occ = hull_pts = poly2 = None
    if grid_filter == "occupancy" or tri_filter == "occupancy":
        rf = mesh.faces[fmask]
        if len(rf):
            ev = mesh.vertices
            el = np.concatenate(
                [
                    np.linalg.norm(ev[rf[:, 0]] - ev[rf[:, 1]], axis=1),
                    np.linalg.norm(ev[rf[:, 1]] - ev[rf[:, 2]], axis=1),
                    np.linalg.norm(ev[rf[:, 2]] - ev[rf[:, 0]], axis=1),
                ]
            )
            stamp = max(ASSIGN_NEAR * delta, STAMP_EDGE_FACTOR * float(np.median(el)))
        else:
            stamp = max(ASSIGN_NEAR * delta, gs)
        occ = build_occupancy(proj2_all, cell=stamp, stamp_radius=stamp)
        hull_pts = proj2_all[convex_hull(proj2_all)]
    if grid_filter == "polygon" or tri_filter == "polygon":
        if polygon_ids is None:
            raise ValueError("polygon filter requires polygon_ids")
        pos = {int(v): k for k, v in enumerate(cluster.vertices)}
        poly2 = proj2_all[[pos[int(v)] for v in polygon_ids]]

    def _passes(pts2, which):
        if which == "none" or len(pts2) == 0:
            return np.ones(len(pts2), dtype=bool)
        if which == "occupancy":
            ok = occ.is_occupied(pts2)
            return ok & points_in_polygon(pts2, hull_pts)
        return points_in_polygon(pts2, poly2)

    grid2 = grid2[_passes(grid2, grid_filter)]

    # triangulation input: kept vertices projected in place, then grid
    pos_in_cluster = np.searchsorted(cluster.vertices, keep)
    base2 = proj2_all[pos_in_cluster]
    base3 = proj3_all[pos_in_cluster]
    if len(base2) and len(grid2):
        hg = HashGrid(base2, cell=max(GRID_CLEARANCE * gs, 1e-12))
        qi, _, _ = hg.pairs_within(grid2, GRID_CLEARANCE * gs)
        too_close = np.zeros(len(grid2), dtype=bool)
        too_close[qi] = True
        grid2 = grid2[~too_close]

    pts2 = np.concatenate([base2, grid2]) if len(grid2) else base2
    if len(pts2) < 3:
        return _skip(mesh, "not enough points to rebuild")
    upts, first, _ = merge_close_points(pts2, tol=1e-9)
    if len(upts) < 3:
        return _skip(mesh, "rebuild points nearly coincident")
    try:
        tri = delaunay(upts)
    except DegenerateInputError:
        return _skip(mesh, "degenerate rebuild geometry")

    cent = upts[tri.triangles].mean(axis=1)
    tris = tri.triangles[_passes(cent, tri_filter)]
    if len(tris) == 0:
        return _skip(mesh, "no triangles survived the region filter")

    # splice: delete interiors, move kept vertices onto the plane,
    # append grid vertices, reindex everything
    delete = np.zeros(mesh.n_vertices, dtype=bool)
    delete[cluster.vertices] = True
    delete[keep] = False
    delete[retain] = False
    new_verts = mesh.vertices.copy()
    new_verts[keep] = base3
    old2new = np.where(
        delete, -1, np.cumsum(~delete, dtype=np.int64) - 1
    )
    kept_verts = new_verts[~delete]
    n_kept = len(kept_verts)

    n_base = len(base2)
    appended_sel = first >= n_base
    appended3 = frame.to_3d(upts[appended_sel])
    uidx_to_new = np.empty(len(upts), dtype=np.int64)
    uidx_to_new[appended_sel] = n_kept + np.arange(int(appended_sel.sum()))
    base_first = first[~appended_sel]
    uidx_to_new[~appended_sel] = old2new[keep[base_first]]

    kept_faces = old2new[mesh.faces[~fmask]]
    if len(kept_faces) and kept_faces.min() < 0:
        raise RuntimeError("refinement would orphan a referenced vertex")
    patch_faces = uidx_to_new[tris]
    all_faces = (
        np.concatenate([kept_faces, patch_faces]) if len(kept_faces) else patch_faces
    )
    all_verts = (
        np.concatenate([kept_verts, appended3]) if len(appended3) else kept_verts
    )
    labels = None
    if mesh.labels is not None:
        labels = np.concatenate(
            [
                mesh.labels[~delete],
                np.full(len(appended3), cluster.plane_id, dtype=np.int64),
            ]
        )
    out = TriMesh(all_verts, all_faces, labels)
    return RegionResult(
        mesh=out,
        vertex_map=old2new,
        patch_faces=(len(kept_faces), len(all_faces)),
        new_vertices=(n_kept, len(all_verts)),
    )


def refine_plane_region(
    mesh: TriMesh,
    cluster: PlaneVertexCluster,
    basis,
    delta: float,
    grid_spacing: float | None = None,
) -> RegionResult:
    """Rebuild one planar region: boundary kept (projected in place),
    interior replaced by an occupancy-filtered plane grid."""
    return rebuild_region(
        mesh,
        cluster,
        basis,
        delta,
        grid_spacing,
        grid_filter="occupancy",
        tri_filter="occupancy",
    )


def refine_mesh(
    mesh: TriMesh,
    clusters,
    bases,
    delta: float,
    grid_spacing: float | None = None,
) -> TriMesh:
    """Refine every plane region, largest cluster first.

    clusters and bases are parallel sequences.  A region that cannot be
    rebuilt is skipped with a warning; the rest proceed on the updated mesh.
    """
    order = np.argsort([-len(c.vertices) for c in clusters], kind="stable")
    current = mesh
    idx_of = [np.asarray(c.vertices, dtype=np.int64) for c in clusters]
    for k in order:
        verts = idx_of[k]
        verts = verts[verts >= 0]
        if len(verts) < 3:
            continue
        cl = PlaneVertexCluster(plane_id=clusters[k].plane_id, vertices=verts)
        res = refine_plane_region(current, cl, bases[k], delta, grid_spacing)
        if res.skipped:
            continue
        current = res.mesh
        for j in order:
            v = idx_of[j]
            idx_of[j] = np.where(v >= 0, res.vertex_map[np.clip(v, 0, None)], -1)
    return current
