"""Synthetic planar scenes: exact geometry, analytic rendering, known labels.

Scenes are collections of 3D rectangles (axis-aligned in practice), so every
derived artifact has a closed form: ray casting is ray-rectangle
intersection, ground-truth plane equations come straight from the
construction, and point clouds sample rectangle interiors exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lifting import CameraView
from .mesh import TriMesh, concatenate, merge_duplicate_vertices
from .perception import NormalMap, PlaneMaskImage
from .planefit import PlaneEq

WELD_TOL = 1e-9


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero direction")
    return v / n


@dataclass
class SceneRect:
    """Oriented rectangle: center, in-plane unit axes u, v, half extents.

    The surface normal is u x v.
    """

    center: np.ndarray
    u: np.ndarray
    v: np.ndarray
    half_u: float
    half_v: float
    name: str = ""

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.u = _unit(self.u)
        v = np.asarray(self.v, dtype=np.float64)
        v = v - (v @ self.u) * self.u
        self.v = _unit(v)
        if self.half_u <= 0 or self.half_v <= 0:
            raise ValueError("half extents must be positive")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u, self.v)

    @property
    def area(self) -> float:
        return 4.0 * self.half_u * self.half_v

    def corners(self) -> np.ndarray:
        du = self.half_u * self.u
        dv = self.half_v * self.v
        c = self.center
        return np.stack([c - du - dv, c + du - dv, c + du + dv, c - du + dv])

    def plane(self) -> PlaneEq:
        n = self.normal
        return PlaneEq(normal=n, offset=-float(n @ self.center))

    def sample(self, n: int, rng) -> np.ndarray:
        a = rng.uniform(-self.half_u, self.half_u, size=n)
        b = rng.uniform(-self.half_v, self.half_v, size=n)
        return self.center + a[:, None] * self.u + b[:, None] * self.v

    def mesh(self, edge: float | None = None) -> TriMesh:
        """Grid tessellation at target edge length; triangles wind CCW
        around the rectangle normal.  edge=None gives one cell (2 triangles)."""
        if edge is None:
            nu = nv = 1
        elif edge <= 0:
            raise ValueError("edge must be positive")
        else:
            nu = max(1, int(math.ceil(2.0 * self.half_u / edge - 1e-12)))
            nv = max(1, int(math.ceil(2.0 * self.half_v / edge - 1e-12)))
        su = np.linspace(-self.half_u, self.half_u, nu + 1)
        sv = np.linspace(-self.half_v, self.half_v, nv + 1)
        uu, vv = np.meshgrid(su, sv, indexing="ij")
        verts = (
            self.center
            + uu.reshape(-1, 1) * self.u
            + vv.reshape(-1, 1) * self.v
        )
        idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        faces = np.concatenate(
            [np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)]
        )
        return TriMesh(verts, faces)


def _axis_rect(center, iu, iv, half_u, half_v, name=""):
    """Axis-aligned rect; iu/iv are signed axis indices (1-based, +-)."""
    e = np.eye(3)
    u = e[abs(iu) - 1] * (1 if iu > 0 else -1)
    v = e[abs(iv) - 1] * (1 if iv > 0 else -1)
    return SceneRect(np.asarray(center, float), u, v, half_u, half_v, name)


@dataclass
class SceneSpec:
    """Rectangle list plus camera-ring and sampling settings."""

    rects: list = field(default_factory=list)
    boxes: list = field(default_factory=list)  # AABBs for object overlap checks
    cam_count: int = 24
    cam_radius: float | None = None
    cam_height: float | None = None
    cam_target: tuple = (0.0, 0.0, 1.2)
    image_size: tuple = (320, 240)
    fov_deg: float = 60.0
    cloud_points: int = 20000

    @classmethod
    def box_room(cls, size=(4.0, 4.0, 3.0), **kwargs) -> "SceneSpec":
        """Closed box room centered on the z axis, floor at z=0, normals
        pointing inward."""
        w, d, h = (float(s) for s in size)
        spec = cls(**kwargs)
        spec.rects = [
            _axis_rect((0, 0, 0), +1, +2, w / 2, d / 2, "floor"),
            _axis_rect((0, 0, h), +2, +1, d / 2, w / 2, "ceiling"),
            _axis_rect((-w / 2, 0, h / 2), +2, +3, d / 2, h / 2, "wall_xneg"),
            _axis_rect((+w / 2, 0, h / 2), +3, +2, h / 2, d / 2, "wall_xpos"),
            _axis_rect((0, -d / 2, h / 2), +3, +1, h / 2, w / 2, "wall_yneg"),
            _axis_rect((0, +d / 2, h / 2), +1, +3, w / 2, h / 2, "wall_ypos"),
        ]
        if spec.cam_radius is None:
            spec.cam_radius = 0.25 * min(w, d)
        if spec.cam_height is None:
            spec.cam_height = 0.45 * h
        spec.cam_target = (0.0, 0.0, 0.4 * h)
        return spec

    def add_box(
        self,
        center_xy,
        size,
        support_z: float = 0.0,
        open_bottom: bool = True,
        name: str = "box",
    ) -> "SceneSpec":
        """Axis-aligned box resting on z=support_z, outward normals."""
        cx, cy = (float(c) for c in center_xy)
        w, d, h = (float(s) for s in size)
        lo = np.array([cx - w / 2, cy - d / 2, support_z])
        hi = np.array([cx + w / 2, cy + d / 2, support_z + h])
        for blo, bhi in self.boxes:
            if (lo < bhi - 1e-12).all() and (hi > blo + 1e-12).all():
                raise ValueError("intersecting objects")
        self.boxes.append((lo, hi))
        zm = support_z + h / 2
        self.rects.extend(
            [
                _axis_rect((cx, cy, hi[2]), +1, +2, w / 2, d / 2, f"{name}_top"),
                _axis_rect((hi[0], cy, zm), +2, +3, d / 2, h / 2, f"{name}_xpos"),
                _axis_rect((lo[0], cy, zm), +3, +2, h / 2, d / 2, f"{name}_xneg"),
                _axis_rect((cx, hi[1], zm), +3, +1, h / 2, w / 2, f"{name}_ypos"),
                _axis_rect((cx, lo[1], zm), +1, +3, w / 2, h / 2, f"{name}_yneg"),
            ]
        )
        if not open_bottom:
            self.rects.append(
                _axis_rect((cx, cy, support_z), +2, +1, d / 2, w / 2, f"{name}_bottom")
            )
        return self

    def add_table(
        self,
        center_xy=(0.0, 0.0),
        top_size=(1.6, 0.8),
        top_z: float = 0.75,
        leg_side: float = 0.08,
    ) -> "SceneSpec":
        cx, cy = center_xy
        w, d = top_size
        self.rects.append(
            _axis_rect((cx, cy, top_z), +1, +2, w / 2, d / 2, "tabletop")
        )
        inset = leg_side
        for k, (sx, sy) in enumerate([(-1, -1), (1, -1), (1, 1), (-1, 1)]):
            lx = cx + sx * (w / 2 - inset)
            ly = cy + sy * (d / 2 - inset)
            self.add_box(
                (lx, ly),
                (leg_side, leg_side, top_z - 0.02),
                support_z=0.0,
                name=f"leg{k}",
            )
        return self


@dataclass
class SceneBundle:
    """Ground truth for one synthetic scene."""

    spec: SceneSpec
    mesh: TriMesh
    planes: list
    cloud: np.ndarray
    cloud_labels: np.ndarray
    views: list


def sample_surface(rects, n: int, seed: int = 0):
    """Area-weighted uniform samples over rectangles -> (points, rect ids)."""
    rng = np.random.default_rng(seed)
    areas = np.array([r.area for r in rects])
    labels = rng.choice(len(rects), size=n, p=areas / areas.sum())
    pts = np.zeros((n, 3))
    for i, r in enumerate(rects):
        sel = np.flatnonzero(labels == i)
        if len(sel):
            pts[sel] = r.sample(len(sel), rng)
    return pts, labels.astype(np.int64)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera (R, t): +z forward, +x right, +y down."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = _unit(np.asarray(target, dtype=np.float64) - eye)
    upv = np.asarray(up, dtype=np.float64)
    if abs(fwd @ _unit(upv)) > 1.0 - 1e-9:
        upv = np.array([0.0, 1.0, 0.0])
    right = _unit(np.cross(fwd, upv))
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return R, -R @ eye


def ring_cameras(
    count: int,
    radius: float,
    height: float,
    target=(0.0, 0.0, 1.2),
    width: int = 320,
    height_px: int = 240,
    fov_deg: float = 60.0,
):
    """Inward-looking camera ring around the target's vertical axis."""
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    K = np.array([[f, 0, width / 2.0], [0, f, height_px / 2.0], [0, 0, 1.0]])
    views = []
    tgt = np.asarray(target, dtype=np.float64)
    for k in range(count):
        ang = 2.0 * math.pi * k / count
        eye = np.array(
            [tgt[0] + radius * math.cos(ang), tgt[1] + radius * math.sin(ang), height]
        )
        R, t = look_at(eye, tgt)
        views.append(CameraView(K=K.copy(), R=R, t=t, width=width, height=height_px))
    return views


def build_scene(spec: SceneSpec, seed: int = 0, mesh_edge: float | None = None) -> SceneBundle:
    """Assemble GT mesh (with vertex plane labels), plane equations,
    sampled labeled cloud, and the camera ring.

    mesh_edge=None keeps each rectangle at 2 triangles.  Welding is
    label-aware: seams between different planes stay unstitched so every
    labeled region keeps its complete geometry.
    """
    if not spec.rects:
        raise ValueError("scene has no rectangles")
    parts = []
    for i, r in enumerate(spec.rects):
        m = r.mesh(mesh_edge)
        m.labels = np.full(m.n_vertices, i, dtype=np.int64)
        parts.append(m)
    mesh = merge_duplicate_vertices(concatenate(parts), tol=WELD_TOL, by_label=True)
    planes = [r.plane() for r in spec.rects]
    cloud, cloud_labels = sample_surface(spec.rects, spec.cloud_points, seed=seed)
    w, h = spec.image_size
    views = ring_cameras(
        spec.cam_count,
        spec.cam_radius if spec.cam_radius is not None else 1.0,
        spec.cam_height if spec.cam_height is not None else 1.5,
        target=spec.cam_target,
        width=w,
        height_px=h,
        fov_deg=spec.fov_deg,
    )
    return SceneBundle(
        spec=spec,
        mesh=mesh,
        planes=planes,
        cloud=cloud,
        cloud_labels=cloud_labels,
        views=views,
    )


@dataclass
class RenderedView:
    normals: NormalMap
    depth: np.ndarray
    masks: PlaneMaskImage


def _vmf_tangent(normal):
    n = _unit(normal)
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = _unit(e - (e @ n) * n)
    return t1, np.cross(n, t1)


def render_view(
    rects,
    view: CameraView,
    normal_kappa: float | None = None,
    seed: int = 0,
    mask_erode: int = 0,
) -> RenderedView:
    """Ray-cast the rectangles: per-pixel world normal, depth, instance id.

    Instance id = rect index + 1, 0 = background.  Misses get zero normal
    and zero depth.  normal_kappa adds von Mises-Fisher noise around the
    true normal; mask_erode shrinks every instance mask by that many
    4-connected erosion steps to mimic imperfect segmentation.
    """
    if hasattr(rects, "rects"):
        rects = rects.rects
    elif hasattr(rects, "spec"):
        rects = rects.spec.rects
    w, h = view.width, view.height
    xs = (np.arange(w) + 0.5 - view.K[0, 2]) / view.K[0, 0]
    ys = (np.arange(h) + 0.5 - view.K[1, 2]) / view.K[1, 1]
    dirs = np.empty((h, w, 3))
    dirs[..., 0] = xs[None, :]
    dirs[..., 1] = ys[:, None]
    dirs[..., 2] = 1.0

    best_t = np.full((h, w), np.inf)
    best_id = np.zeros((h, w), dtype=np.int32)
    flip = np.zeros((h, w), dtype=bool)
    for i, r in enumerate(rects):
        c = view.R @ r.center + view.t
        u = view.R @ r.u
        v = view.R @ r.v
        n = view.R @ r.normal
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (n @ c) / denom
        p = t[..., None] * dirs
        lu = (p - c) @ u
        lv = (p - c) @ v
        hit = (
            (np.abs(denom) > 1e-12)
            & (t > 1e-9)
            & (np.abs(lu) <= r.half_u + 1e-12)
            & (np.abs(lv) <= r.half_v + 1e-12)
            & (t < best_t)
        )
        best_t[hit] = t[hit]
        best_id[hit] = i + 1
        flip[hit] = denom[hit] > 0  # back side faces the camera

    normals = np.zeros((h, w, 3))
    for i, r in enumerate(rects):
        sel = best_id == i + 1
        if not sel.any():
            continue
        normals[sel] = r.normal
        back = sel & flip
        normals[back] = -r.normal

    if normal_kappa is not None:
        rng = np.random.default_rng(seed)
        kappa = float(normal_kappa)
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        for i, r in enumerate(rects):
            for sign in (1.0, -1.0):
                mu = sign * r.normal
                sel = (best_id == i + 1) & (flip if sign < 0 else ~flip)
                cnt = int(sel.sum())
                if cnt == 0:
                    continue
                xi = rng.uniform(size=cnt)
                wq = 1.0 + np.log(xi + (1.0 - xi) * math.exp(-2.0 * kappa)) / kappa
                phi = rng.uniform(0.0, 2.0 * math.pi, size=cnt)
                t1, t2 = _vmf_tangent(mu)
                s = np.sqrt(np.clip(1.0 - wq * wq, 0.0, None))
                normals[sel] = (
                    wq[:, None] * mu
                    + (s * np.cos(phi))[:, None] * t1
                    + (s * np.sin(phi))[:, None] * t2
                )

    depth = np.where(np.isfinite(best_t), best_t, 0.0)
    labels = best_id
    if mask_erode > 0:
        from scipy import ndimage

        out = np.zeros_like(labels)
        cross = ndimage.generate_binary_structure(2, 1)
        for inst in np.unique(labels):
            if inst == 0:
                continue
            m = ndimage.binary_erosion(
                labels == inst, structure=cross, iterations=mask_erode
            )
            out[m] = inst
        labels = out
        normals = np.where((labels > 0)[..., None], normals, 0.0)
    return RenderedView(
        normals=NormalMap(data=normals),
        depth=depth,
        masks=PlaneMaskImage(labels=labels.astype(np.int32)),
    )


def perturb_dense_mesh(spec, edge_len: float, noise_sigma: float, seed: int = 0) -> TriMesh:
    """Re-tessellate every rectangle at edge_len and displace vertices along
    their rectangle normal by Gaussian noise."""
    if hasattr(spec, "spec"):
        spec = spec.spec
    rects = spec.rects if hasattr(spec, "rects") else list(spec)
    if edge_len <= 0:
        raise ValueError("edge_len must be positive")
    parts = []
    for i, r in enumerate(rects):
        m = r.mesh(edge_len)
        m.labels = np.full(m.n_vertices, i, dtype=np.int64)
        parts.append(m)
    mesh = merge_duplicate_vertices(concatenate(parts), tol=WELD_TOL)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        disp = noise_sigma * rng.standard_normal(mesh.n_vertices)
        normals = np.stack([rects[k].normal for k in mesh.labels])
        mesh.vertices = mesh.vertices + disp[:, None] * normals
    return mesh


# ---------------------------------------------------------------------------
# Desk scene: conforming tessellation for support-correction tests
# ---------------------------------------------------------------------------

@dataclass
class DeskScene:
    """Desk sheet with box-shaped objects glued into contact holes.

    The tabletop is a gridded sheet with one rectangular hole under each
    box; box walls share the hole-rim vertices exactly, so the desk and its
    objects form one connected component, the way a fused reconstruction
    would.  Legs hang below the top without touching it.
    """

    mesh: TriMesh
    plane: PlaneEq
    cluster: np.ndarray          # supportive-cluster vertex indices
    box_vertex_sets: list        # per box: (K, 3) construction vertex positions
    hole_areas: list
    outer_area: float
    top_z: float
    cell: float


def _gridded_box(lo, hi, cell, open_bottom=True, open_top=False):
    cx, cy = (lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2
    zm = (lo[2] + hi[2]) / 2
    hw, hd, hh = (hi - lo) / 2
    faces = [
        _axis_rect((hi[0], cy, zm), +2, +3, hd, hh),
        _axis_rect((lo[0], cy, zm), +3, +2, hh, hd),
        _axis_rect((cx, hi[1], zm), +3, +1, hh, hw),
        _axis_rect((cx, lo[1], zm), +1, +3, hw, hh),
    ]
    if not open_top:
        faces.append(_axis_rect((cx, cy, hi[2]), +1, +2, hw, hd))
    if not open_bottom:
        faces.append(_axis_rect((cx, cy, lo[2]), +2, +1, hd, hw))
    return concatenate([f.mesh(cell) for f in faces])


def build_desk_scene(
    top_size=(1.6, 0.8),
    top_z: float = 0.75,
    cell: float = 0.05,
    box_cells=None,
    legs: bool = True,
) -> DeskScene:
    """box_cells: per box (i0, i1, j0, j1, height) with the footprint given
    as half-open cell ranges on the tabletop lattice."""
    W, D = (float(s) for s in top_size)
    nx = int(round(W / cell))
    ny = int(round(D / cell))
    if box_cells is None:
        box_cells = [(4, 9, 3, 9, 0.20), (13, 18, 8, 13, 0.15), (24, 29, 4, 10, 0.25)]
    x0, y0 = -W / 2, -D / 2
    for i0, i1, j0, j1, _ in box_cells:
        if not (0 < i0 < i1 < nx and 0 < j0 < j1 < ny):
            raise ValueError("box footprint must lie strictly inside the top")

    hole = np.zeros((nx, ny), dtype=bool)
    for i0, i1, j0, j1, _ in box_cells:
        hole[i0:i1, j0:j1] = True

    # tabletop sheet: two up-facing triangles per non-hole cell
    xs = x0 + cell * np.arange(nx + 1)
    ys = y0 + cell * np.arange(ny + 1)
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    lattice = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, top_z)], axis=1)
    keep = ~hole
    a = vid[:-1, :-1][keep]
    b = vid[1:, :-1][keep]
    c = vid[1:, 1:][keep]
    d = vid[:-1, 1:][keep]
    top_faces = np.concatenate(
        [np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)]
    )
    used = np.unique(top_faces)
    remap = np.zeros(len(lattice), dtype=np.int64)
    remap[used] = np.arange(len(used))
    sheet = TriMesh(lattice[used], remap[top_faces])

    parts = [sheet]
    box_vertex_sets = []
    hole_areas = []
    for i0, i1, j0, j1, h in box_cells:
        lo = np.array([x0 + i0 * cell, y0 + j0 * cell, top_z])
        hi = np.array([x0 + i1 * cell, y0 + j1 * cell, top_z + h])
        box = _gridded_box(lo, hi, cell, open_bottom=True)
        box = merge_duplicate_vertices(box, tol=WELD_TOL)
        parts.append(box)
        box_vertex_sets.append(box.vertices.copy())
        hole_areas.append(float((hi[0] - lo[0]) * (hi[1] - lo[1])))
    if legs:
        side = 0.06
        for sx, sy in [(-1, -1), (1, -1), (1, 1), (-1, 1)]:
            lx = sx * (W / 2 - 0.1)
            ly = sy * (D / 2 - 0.1)
            lo = np.array([lx - side / 2, ly - side / 2, 0.0])
            hi = np.array([lx + side / 2, ly + side / 2, top_z - 0.02])
            parts.append(_gridded_box(lo, hi, cell, open_bottom=False))

    mesh = merge_duplicate_vertices(concatenate(parts), tol=WELD_TOL)
    cluster = np.flatnonzero(np.abs(mesh.vertices[:, 2] - top_z) <= 1e-9)
    plane = PlaneEq(normal=np.array([0.0, 0.0, 1.0]), offset=-float(top_z))
    return DeskScene(
        mesh=mesh,
        plane=plane,
        cluster=cluster,
        box_vertex_sets=box_vertex_sets,
        hole_areas=hole_areas,
        outer_area=W * D,
        top_z=top_z,
        cell=cell,
    )
