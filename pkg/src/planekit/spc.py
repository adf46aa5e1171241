"""Supportive-plane correction.

A support surface (desk, floor) reconstructed under resting objects has
contact holes and possibly a ragged rim.  This module rebuilds such a
plane to its full extent (holes filled), splits off the objects resting on
it, and seals each object's open contact boundary with a flat cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geom2d import PlaneFrame, polygon_area
from .mesh import TriMesh
from .planefit import PlaneEq, fit_plane_lsq, project_to_plane
from .refine import (
    PlaneVertexCluster,
    classify_boundary_interior,
    rebuild_region,
    region_face_mask,
    region_frame,
)

log = logging.getLogger(__name__)

SEAL_BAND = 1.5  # contact loops must lie within this * delta of the plane


@dataclass
class BoundaryLoop:
    """Closed cycle of region-boundary vertices; kind is outer or hole."""

    vertices: np.ndarray
    kind: str | None = None


def _loop_edges(mesh: TriMesh, cluster) -> np.ndarray:
    """Edges incident to exactly one all-in-cluster face."""
    rf = mesh.faces[region_face_mask(mesh, cluster)]
    if len(rf) == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate([rf[:, [0, 1]], rf[:, [1, 2]], rf[:, [2, 0]]])
    lo = pairs.min(axis=1).astype(np.int64)
    hi = pairs.max(axis=1).astype(np.int64)
    keys, counts = np.unique(lo * mesh.n_vertices + hi, return_counts=True)
    single = keys[counts == 1]
    return np.stack([single // mesh.n_vertices, single % mesh.n_vertices], axis=1)


def extract_loops(mesh: TriMesh, cluster, frame: PlaneFrame | None = None):
    """Group the region's boundary edges into closed loops.

    Vertices with more than two boundary edges (pinch points) are resolved
    by leftmost-turn walking in the plane frame, with a warning.
    """
    edges = _loop_edges(mesh, cluster)
    if len(edges) == 0:
        return []
    if frame is None:
        plane = fit_plane_lsq(mesh.vertices[cluster.vertices])
        origin = project_to_plane(
            mesh.vertices[cluster.vertices].mean(axis=0)[None, :], plane
        )[0]
        frame = PlaneFrame.from_normal(plane.normal, origin=origin)
    proj2 = {}

    def p2(v):
        if v not in proj2:
            proj2[v] = frame.to_2d(mesh.vertices[v][None, :])[0]
        return proj2[v]

    incident: dict = {}
    for eid, (a, b) in enumerate(edges):
        incident.setdefault(int(a), []).append((int(b), eid))
        incident.setdefault(int(b), []).append((int(a), eid))
    for v in incident:
        incident[v].sort()
    junctions = [v for v, ns in incident.items() if len(ns) > 2]
    if junctions:
        log.warning(
            "non-manifold region boundary at %d vertices; splitting by angle",
            len(junctions),
        )
    odd = [v for v, ns in incident.items() if len(ns) % 2 == 1]
    if odd:
        raise ValueError("region boundary does not close into loops")

    used = np.zeros(len(edges), dtype=bool)
    loops = []
    for start_eid in range(len(edges)):
        if used[start_eid]:
            continue
        a, b = (int(x) for x in edges[start_eid])
        used[start_eid] = True
        loop = [a, b]
        prev, cur = a, b
        while cur != a:
            cands = [(x, eid) for x, eid in incident[cur] if not used[eid]]
            if not cands:
                raise ValueError("region boundary does not close into loops")
            if len(cands) == 1:
                nxt, eid = cands[0]
            else:
                # leftmost turn relative to the incoming direction
                d_in = p2(cur) - p2(prev)
                base = np.arctan2(d_in[1], d_in[0])
                best = None
                for x, eid_c in cands:
                    d_out = p2(x) - p2(cur)
                    ang = (np.arctan2(d_out[1], d_out[0]) - base) % (2.0 * np.pi)
                    key = (ang, x)
                    if best is None or key < best[0]:
                        best = (key, x, eid_c)
                _, nxt, eid = best
            used[eid] = True
            prev, cur = cur, nxt
            if cur != a:
                loop.append(cur)
        loops.append(BoundaryLoop(vertices=np.asarray(loop, dtype=np.int64)))
    return loops


def classify_loops(mesh: TriMesh, loops, frame: PlaneFrame):
    """Largest |projected polygon area| is the outer loop, the rest holes."""
    if not loops:
        raise ValueError("no loops to classify")
    areas = [
        abs(polygon_area(frame.to_2d(mesh.vertices[lp.vertices]))) for lp in loops
    ]
    outer = int(np.argmax(areas))
    for k, lp in enumerate(loops):
        lp.kind = "outer" if k == outer else "hole"
    return loops


@dataclass
class SupportResult:
    """Corrected mesh plus bookkeeping for detachment."""

    mesh: TriMesh
    vertex_map: np.ndarray
    patch_faces: tuple
    new_vertices: tuple
    outer_loop: np.ndarray     # new-mesh vertex ids
    hole_loops: list           # list of new-mesh vertex id arrays
    plane: PlaneEq


def correct_supportive_plane(
    mesh: TriMesh,
    cluster: PlaneVertexCluster,
    basis,
    delta: float,
    grid_spacing: float | None = None,
    extent: str = "outer",
) -> SupportResult:
    """Rebuild a supportive plane over its full extent.

    extent="outer": grid points and triangles are clipped to the outer
    boundary loop, so holes inside it are filled.  extent="mer": the whole
    minimum enclosing rectangle is rebuilt.  Hole-loop vertices are kept in
    the mesh (their objects still reference them) but excluded from the
    patch, which disconnects the objects from the plane.
    """
    if extent not in ("outer", "mer"):
        raise ValueError("extent must be 'outer' or 'mer'")
    cluster = classify_boundary_interior(mesh, cluster)
    frame = region_frame(mesh, cluster, basis)
    loops = classify_loops(mesh, extract_loops(mesh, cluster, frame), frame)
    if not any(lp.kind == "outer" for lp in loops):
        raise ValueError("not a supportive plane candidate")
    outer = next(lp for lp in loops if lp.kind == "outer")
    holes = [lp for lp in loops if lp.kind == "hole"]
    hole_ids = (
        np.unique(np.concatenate([lp.vertices for lp in holes]))
        if holes
        else np.empty(0, dtype=np.int64)
    )
    keep = np.union1d(cluster.boundary, outer.vertices)
    mode = "polygon" if extent == "outer" else "none"
    res = rebuild_region(
        mesh,
        cluster,
        basis,
        delta,
        grid_spacing,
        keep_ids=keep,
        retain_ids=hole_ids,
        grid_filter=mode,
        tri_filter=mode,
        polygon_ids=outer.vertices if extent == "outer" else None,
        frame=frame,
    )
    if res.skipped:
        raise RuntimeError(f"support correction failed: {res.reason}")
    return SupportResult(
        mesh=res.mesh,
        vertex_map=res.vertex_map,
        patch_faces=res.patch_faces,
        new_vertices=res.new_vertices,
        outer_loop=res.vertex_map[outer.vertices],
        hole_loops=[res.vertex_map[lp.vertices] for lp in holes],
        plane=basis.plane(),
    )


def detach_object(mesh: TriMesh, supports):
    """Split off components resting on corrected supports.

    supports: one SupportResult or a list.  A connected component that
    contains any former hole-loop vertex is an object; everything else
    stays in the scene mesh.  Returns (scene_mesh, [object meshes]).
    The face multiset is conserved: every input face lands in exactly one
    output.
    """
    if isinstance(supports, SupportResult):
        supports = [supports]
    face_labels, n_comp = mesh.connected_components()
    if n_comp == 0:
        return mesh.copy(), []
    touch = np.zeros((len(supports), n_comp), dtype=bool)
    vert_comp = np.full(mesh.n_vertices, -1, dtype=np.int64)
    for k in range(3):
        vert_comp[mesh.faces[:, k]] = face_labels
    for s, sup in enumerate(supports):
        for lp in sup.hole_loops:
            comps = vert_comp[lp]
            touch[s, comps[comps >= 0]] = True
    is_object = touch.any(axis=0)
    multi = np.flatnonzero(touch.sum(axis=0) > 1)
    for c in multi:
        log.warning("component %d touches %d supportive planes", c, int(touch[:, c].sum()))
    objects = []
    for c in np.flatnonzero(is_object):
        sub, _ = mesh.submesh(face_labels == c)
        objects.append(sub)
    scene, _ = mesh.submesh(~is_object[face_labels])
    return scene, objects


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _is_convex(pts2) -> bool:
    n = len(pts2)
    eps = 1e-12 * float(np.abs(pts2).max() ** 2 + 1.0)
    a = pts2
    b = np.roll(pts2, -1, axis=0)
    c = np.roll(pts2, -2, axis=0)
    cr = _cross2(b - a, c - b)
    return bool((cr >= -eps).all())


def _ear_clip(pts2) -> np.ndarray:
    """Triangulate a simple CCW polygon; returns index triples."""
    n = len(pts2)
    idx = list(range(n))
    tris = []
    eps = 1e-12 * float(np.abs(pts2).max() ** 2 + 1.0)
    while len(idx) > 3:
        found = False
        crosses = []
        for k in range(len(idx)):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            pa, pb, pc = pts2[a], pts2[b], pts2[c]
            cr = float(_cross2(pb - pa, pc - pb))
            crosses.append(cr)
            if cr <= eps:
                continue  # reflex or flat corner, not an ear tip
            others = [j for j in idx if j not in (a, b, c)]
            if others:
                p = pts2[others]
                s0 = _cross2(pb - pa, p - pa)
                s1 = _cross2(pc - pb, p - pb)
                s2 = _cross2(pa - pc, p - pc)
                if ((s0 >= -eps) & (s1 >= -eps) & (s2 >= -eps)).any():
                    continue  # some vertex blocks this ear
            tris.append((a, b, c))
            idx.pop(k)
            found = True
            break
        if not found:
            # numerical stall: clip the most convex corner anyway
            k = int(np.argmax(crosses))
            log.warning("ear clipping stalled; forcing a clip")
            tris.append((idx[k - 1], idx[k], idx[(k + 1) % len(idx)]))
            idx.pop(k)
    tris.append(tuple(idx))
    return np.asarray(tris, dtype=np.int64)


def seal_contact(object_mesh: TriMesh, plane: PlaneEq, delta: float) -> TriMesh:
    """Cap every open boundary loop lying within 1.5*delta of the plane.

    Loop vertices are projected onto the plane; convex loops are fanned from
    an added centroid vertex, non-convex ones ear-clipped with no new
    vertex.  Cap faces wind so their normal is -plane.normal (facing into
    the former support).
    """
    out = object_mesh.copy()
    loops = object_mesh.boundary_loops()
    add_verts = []
    add_faces = []
    next_id = out.n_vertices
    for loop in loops:
        pos = out.vertices[loop]
        if np.abs(plane.signed_distance(pos)).max() > SEAL_BAND * delta:
            log.warning("boundary loop too far from plane; not sealed")
            continue
        proj = project_to_plane(pos, plane)
        out.vertices[loop] = proj
        origin = project_to_plane(proj.mean(axis=0)[None, :], plane)[0]
        frame = PlaneFrame.from_normal(plane.normal, origin=origin)
        pts2 = frame.to_2d(proj)
        order = loop
        if polygon_area(pts2) < 0:
            pts2 = pts2[::-1]
            order = loop[::-1]
        if _is_convex(pts2):
            centroid = proj.mean(axis=0)
            add_verts.append(centroid)
            cid = next_id
            next_id += 1
            m = len(order)
            for k in range(m):
                # fan CCW then flip so the cap faces -normal
                add_faces.append((cid, order[(k + 1) % m], order[k]))
        else:
            for a, b, c in _ear_clip(pts2):
                add_faces.append((int(order[a]), int(order[c]), int(order[b])))
    if not add_faces:
        return out
    verts = (
        np.concatenate([out.vertices, np.asarray(add_verts)])
        if add_verts
        else out.vertices
    )
    faces = np.concatenate([out.faces, np.asarray(add_faces, dtype=np.int64)])
    labels = None
    if out.labels is not None:
        labels = np.concatenate(
            [out.labels, np.full(len(add_verts), -1, dtype=np.int64)]
        )
    return TriMesh(verts, faces, labels)
