"""Lift per-view plane masks into 3D coplanar point clusters.

Cloud points are projected into every view; points landing on the same
plane instance (after an occlusion check on their projected depths) vote
for pairwise coplanarity.  The accumulated votes form a weighted graph on
point indices which is partitioned by community detection (a Leiden
implementation: local move, refinement, aggregation) under the standard
weighted-modularity objective.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .perception import PlaneMaskImage, kmeans

log = logging.getLogger(__name__)

UNCLUSTERED = -1
GAIN_EPS = 1e-9               # minimum modularity gain for a local move
DEPTH_GAP_FRACTION = 0.05     # centroid gap below this keeps both depth groups
MAX_INSTANCE_POINTS = 2000    # pairwise-vote cap per (view, instance)
MIN_CLUSTER_SIZE = 30


# ---------------------------------------------------------------------------
# Camera views and projection
# ---------------------------------------------------------------------------

@dataclass
class CameraView:
    """Pinhole camera: world-to-camera p_cam = R p + t, pixels via K."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int
    depth: np.ndarray | None = None        # (H, W) camera-z, optional
    plane_mask: PlaneMaskImage | None = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        if np.abs(self.R @ self.R.T - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.R.T @ self.t


def project_points(points, view: CameraView):
    """Project world points: (pixels (N, 2), depths (N,), in_frustum (N,)).

    in_frustum means positive depth and the floor pixel inside the image.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam = pts @ view.R.T + view.t
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = view.K[0, 0] * cam[:, 0] / z + view.K[0, 2]
        v = view.K[1, 1] * cam[:, 1] / z + view.K[1, 2]
    pix = np.stack([u, v], axis=1)
    with np.errstate(invalid="ignore"):
        ix = np.floor(u)
        iy = np.floor(v)
        ok = (z > 0) & (ix >= 0) & (ix < view.width) & (iy >= 0) & (iy < view.height)
    ok &= np.isfinite(u) & np.isfinite(v)
    return pix, z, ok


def occlusion_filter(indices, depths, seed: int = 0) -> np.ndarray:
    """Drop the farther of two depth groups hitting one plane instance.

    2-means on the projected depths; the cluster with the smaller mean
    survives.  If the centroids differ by less than DEPTH_GAP_FRACTION of
    the smaller one the group is considered un-occluded and kept whole.
    """
    idx = np.asarray(indices, dtype=np.int64)
    d = np.asarray(depths, dtype=np.float64)
    if len(idx) < 2:
        return idx
    assign, cents = kmeans(d[:, None], 2, seed=seed)
    c = cents[:, 0]
    lo, hi = float(c.min()), float(c.max())
    if hi - lo < DEPTH_GAP_FRACTION * lo:
        return idx
    return idx[assign == int(np.argmin(c))]


# ---------------------------------------------------------------------------
# Coplanarity graph
# ---------------------------------------------------------------------------

@dataclass
class CoplanarityGraph:
    """Weighted undirected graph on point indices; no self loops.

    Edges are stored as sorted packed keys i * n_nodes + j with i < j.
    """

    n_nodes: int
    edge_keys: np.ndarray  # (E,) int64, sorted
    weights: np.ndarray    # (E,) float64 (vote counts)

    @classmethod
    def from_pair_keys(cls, n_nodes: int, keys) -> "CoplanarityGraph":
        keys = np.asarray(keys, dtype=np.int64)
        uniq, counts = np.unique(keys, return_counts=True)
        return cls(n_nodes=n_nodes, edge_keys=uniq, weights=counts.astype(np.float64))

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "CoplanarityGraph":
        """edges: iterable of (i, j, weight)."""
        keys, w = [], []
        for i, j, wt in edges:
            a, b = (i, j) if i < j else (j, i)
            if a == b:
                raise ValueError("self loops are not allowed")
            keys.append(a * n_nodes + b)
            w.append(wt)
        keys = np.asarray(keys, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        return cls(
            n_nodes=n_nodes,
            edge_keys=keys[order],
            weights=np.asarray(w, dtype=np.float64)[order],
        )

    @property
    def n_edges(self) -> int:
        return len(self.edge_keys)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def endpoints(self):
        return self.edge_keys // self.n_nodes, self.edge_keys % self.n_nodes

    def weight(self, i: int, j: int) -> float:
        a, b = (i, j) if i < j else (j, i)
        k = np.searchsorted(self.edge_keys, a * self.n_nodes + b)
        if k < len(self.edge_keys) and self.edge_keys[k] == a * self.n_nodes + b:
            return float(self.weights[k])
        return 0.0

    def degrees(self) -> np.ndarray:
        i, j = self.endpoints()
        deg = np.zeros(self.n_nodes)
        np.add.at(deg, i, self.weights)
        np.add.at(deg, j, self.weights)
        return deg

    def csr(self):
        """Symmetric adjacency as (indptr, neighbors, weights)."""
        i, j = self.endpoints()
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst, w


def accumulate_edges(
    views,
    points,
    seed: int = 0,
    max_instance_points: int = MAX_INSTANCE_POINTS,
    depth_margin: float | None = None,
) -> CoplanarityGraph:
    """Count pairwise co-occurrence votes over all (view, instance) pairs.

    Points projecting into the same plane-mask instance (kept by the
    occlusion check) vote +1 for every unordered pair, once per view and
    instance.  Groups larger than max_instance_points are subsampled with
    a per-(view, instance) seeded generator.  When a view carries a depth
    map and depth_margin is given, the depth map replaces the 2-means
    occlusion check: points deeper than rendered depth + margin drop out.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = len(pts)
    key_chunks = []
    for vi, view in enumerate(views):
        if view.plane_mask is None:
            raise ValueError(f"view {vi} has no plane mask")
        pix, z, ok = project_points(pts, view)
        hit = np.flatnonzero(ok)
        if len(hit) == 0:
            continue
        ix = np.floor(pix[hit, 0]).astype(np.int64)
        iy = np.floor(pix[hit, 1]).astype(np.int64)
        inst = view.plane_mask.labels[iy, ix]
        for inst_id in np.unique(inst):
            if inst_id <= 0:
                continue
            sel = inst == inst_id
            members = hit[sel]
            depths = z[members]
            sub_seed = int(
                np.random.SeedSequence((seed, vi, int(inst_id))).generate_state(1)[0]
            )
            if depth_margin is not None and view.depth is not None:
                rendered = view.depth[iy[sel], ix[sel]]
                members = members[depths <= rendered + depth_margin]
            else:
                members = occlusion_filter(members, depths, seed=sub_seed)
            if len(members) > max_instance_points:
                rng = np.random.default_rng(sub_seed)
                pick = rng.choice(len(members), size=max_instance_points, replace=False)
                members = members[np.sort(pick)]
            if len(members) < 2:
                continue
            a, b = np.triu_indices(len(members), k=1)
            key_chunks.append(members[a] * n + members[b])
    if not key_chunks:
        return CoplanarityGraph(
            n_nodes=n,
            edge_keys=np.empty(0, dtype=np.int64),
            weights=np.empty(0, dtype=np.float64),
        )
    return CoplanarityGraph.from_pair_keys(n, np.concatenate(key_chunks))


# ---------------------------------------------------------------------------
# Modularity and Leiden partitioning
# ---------------------------------------------------------------------------

def modularity(graph: CoplanarityGraph, labels, resolution: float = 1.0) -> float:
    """Weighted Newman modularity of a labeling (-1 nodes count as singletons)."""
    m = graph.total_weight
    if m == 0:
        raise ValueError("modularity is undefined on an empty graph")
    lab = np.asarray(labels, dtype=np.int64).copy()
    unc = lab == UNCLUSTERED
    if unc.any():
        lab[unc] = lab.max(initial=-1) + 1 + np.arange(int(unc.sum()))
    i, j = graph.endpoints()
    intra = lab[i] == lab[j]
    l_in = float(graph.weights[intra].sum())
    deg = graph.degrees()
    d_c = np.bincount(lab, weights=deg)
    return l_in / m - resolution * float((d_c / (2.0 * m)) @ (d_c / (2.0 * m)))


@dataclass
class PlanePartition:
    """Cluster labels per point; UNCLUSTERED (-1) marks unassigned points."""

    cluster_of: np.ndarray
    modularity_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.cluster_of = np.asarray(self.cluster_of, dtype=np.int64)

    @property
    def n_clusters(self) -> int:
        return int(self.cluster_of.max(initial=UNCLUSTERED)) + 1

    @property
    def clusters(self) -> list:
        return [np.flatnonzero(self.cluster_of == c) for c in range(self.n_clusters)]


def _move_gain(ws, uc, lv, k_v, tot, m, resolution):
    """Modularity gains of moving a node to each candidate community."""
    pos = np.searchsorted(uc, lv)
    k_own = ws[pos] if pos < len(uc) and uc[pos] == lv else 0.0
    tot_minus = tot[lv] - k_v
    return (ws - k_own) / m - resolution * k_v * (tot[uc] - tot_minus) / (2.0 * m * m)


def _local_move(indptr, nbr, w, deg, labels, tot, m, resolution, rng):
    n = len(deg)
    order = rng.permutation(n)
    queue = deque(order)
    queued = np.ones(n, dtype=bool)
    improved = False
    while queue:
        v = int(queue.popleft())
        queued[v] = False
        s, e = indptr[v], indptr[v + 1]
        if s == e:
            continue
        vn, vw = nbr[s:e], w[s:e]
        lv = int(labels[v])
        uc, inv = np.unique(labels[vn], return_inverse=True)
        ws = np.bincount(inv, weights=vw)
        gains = _move_gain(ws, uc, lv, deg[v], tot, m, resolution)
        gains[uc == lv] = 0.0
        best = int(np.argmax(gains))
        if gains[best] > GAIN_EPS:
            target = int(uc[best])
            tot[lv] -= deg[v]
            tot[target] += deg[v]
            labels[v] = target
            improved = True
            wake = vn[(labels[vn] != target) & ~queued[vn]]
            for u in wake:
                queue.append(int(u))
                queued[u] = True
    return improved


def _refine(indptr, nbr, w, deg, comm, m, resolution, rng):
    """Split each community into connected sub-communities (singleton merging)."""
    n = len(deg)
    ref = np.arange(n, dtype=np.int64)
    ref_tot = deg.copy()
    ref_size = np.ones(n, dtype=np.int64)
    for v in rng.permutation(n):
        v = int(v)
        if ref_size[ref[v]] > 1:
            continue
        s, e = indptr[v], indptr[v + 1]
        mask = comm[nbr[s:e]] == comm[v]
        vn, vw = nbr[s:e][mask], w[s:e][mask]
        if len(vn) == 0:
            continue
        uc, inv = np.unique(ref[vn], return_inverse=True)
        ws = np.bincount(inv, weights=vw)
        gains = _move_gain(ws, uc, int(ref[v]), deg[v], ref_tot, m, resolution)
        gains[uc == ref[v]] = 0.0
        best = int(np.argmax(gains))
        if gains[best] > 0.0:
            target = int(uc[best])
            ref_tot[ref[v]] -= deg[v]
            ref_tot[target] += deg[v]
            ref_size[ref[v]] -= 1
            ref_size[target] += 1
            ref[v] = target
    return ref


def _aggregate(indptr, nbr, w, self_w, ref):
    """Collapse refined communities into aggregate nodes."""
    groups = np.unique(ref)
    remap = np.zeros(ref.max() + 1, dtype=np.int64)
    remap[groups] = np.arange(len(groups))
    rr = remap[ref]
    n2 = len(groups)

    src = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    a, b = rr[src], rr[nbr]
    inner = a == b
    self2 = np.bincount(a[inner], weights=w[inner], minlength=n2) / 2.0
    self2 += np.bincount(rr, weights=self_w, minlength=n2)

    keep = ~inner
    keys = a[keep] * n2 + b[keep]
    uniq, inv = np.unique(keys, return_inverse=True)
    w2 = np.bincount(inv, weights=w[keep])
    src2 = uniq // n2
    dst2 = uniq % n2
    indptr2 = np.zeros(n2 + 1, dtype=np.int64)
    np.add.at(indptr2, src2 + 1, 1)
    np.cumsum(indptr2, out=indptr2)
    return indptr2, dst2, w2, self2, rr


def _connected_split(graph: CoplanarityGraph, labels):
    """Split any disconnected community into its components (never lowers Q)."""
    indptr, nbr, _ = graph.csr()
    n = graph.n_nodes
    out = np.full(n, UNCLUSTERED, dtype=np.int64)
    next_id = 0
    seen = np.zeros(n, dtype=bool)
    for v in range(n):
        if seen[v] or labels[v] == UNCLUSTERED:
            continue
        comp = [v]
        seen[v] = True
        stack = [v]
        while stack:
            u = stack.pop()
            for x in nbr[indptr[u] : indptr[u + 1]]:
                if not seen[x] and labels[x] == labels[v]:
                    seen[x] = True
                    comp.append(int(x))
                    stack.append(int(x))
        out[comp] = next_id
        next_id += 1
    return out


def leiden_partition(
    graph: CoplanarityGraph, seed: int = 0, resolution: float = 1.0
) -> PlanePartition:
    """Leiden community detection on the coplanarity graph.

    Levels of local move / refinement / aggregation run until a level stops
    improving.  Every returned cluster is connected; isolated nodes get the
    UNCLUSTERED label.  The modularity trace (one entry per level, plus a
    final entry after the connectivity split) never decreases.
    """
    n = graph.n_nodes
    if graph.total_weight == 0:
        return PlanePartition(cluster_of=np.full(n, UNCLUSTERED, dtype=np.int64))

    rng = np.random.default_rng(seed)
    indptr, nbr, w = graph.csr()
    self_w = np.zeros(n)
    node_of = np.arange(n, dtype=np.int64)  # original node -> current level node
    m = graph.total_weight
    trace: list[float] = []
    init_labels = None  # phase-1 partition carried into the next level

    while True:
        n_lvl = len(indptr) - 1
        deg = np.zeros(n_lvl)
        np.add.at(deg, np.repeat(np.arange(n_lvl), np.diff(indptr)), w)
        deg += 2.0 * self_w
        if init_labels is None:
            labels = np.arange(n_lvl, dtype=np.int64)
        else:
            labels = init_labels
        tot = np.bincount(labels, weights=deg, minlength=int(labels.max()) + 1)
        improved = _local_move(indptr, nbr, w, deg, labels, tot, m, resolution, rng)
        trace.append(modularity(graph, labels[node_of], resolution))
        if not improved:
            flat = labels[node_of]
            break
        ref = _refine(indptr, nbr, w, deg, labels, m, resolution, rng)
        if len(np.unique(ref)) == n_lvl:
            flat = labels[node_of]
            break
        indptr, nbr, w, self_w, rr = _aggregate(indptr, nbr, w, self_w, ref)
        node_of = rr[node_of]
        # aggregate nodes (refined groups) inherit their phase-1 community,
        # so the next level's local move starts from the current partition
        init_labels = np.zeros(len(indptr) - 1, dtype=np.int64)
        init_labels[rr] = labels
        _, init_labels = np.unique(init_labels, return_inverse=True)

    flat = _connected_split(graph, flat)
    deg0 = graph.degrees()
    flat[deg0 == 0] = UNCLUSTERED
    trace.append(modularity(graph, flat, resolution))

    # relabel clusters consecutively in order of their first member
    out = np.full(n, UNCLUSTERED, dtype=np.int64)
    next_id = 0
    for v in range(n):
        if flat[v] == UNCLUSTERED or out[v] != UNCLUSTERED:
            continue
        out[flat == flat[v]] = next_id
        next_id += 1
    return PlanePartition(cluster_of=out, modularity_trace=trace)


def lift_scene(
    points,
    views,
    seed: int = 0,
    resolution: float = 1.0,
    min_cluster_size: int = MIN_CLUSTER_SIZE,
    max_instance_points: int = MAX_INSTANCE_POINTS,
    depth_margin: float | None = None,
):
    """Votes -> graph -> Leiden -> demote clusters below min_cluster_size.

    Returns (graph, partition).  Views must already carry plane masks.
    """
    graph = accumulate_edges(
        views,
        points,
        seed=seed,
        max_instance_points=max_instance_points,
        depth_margin=depth_margin,
    )
    if graph.total_weight == 0:
        return graph, PlanePartition(
            cluster_of=np.full(graph.n_nodes, UNCLUSTERED, dtype=np.int64)
        )
    part = leiden_partition(graph, seed=seed, resolution=resolution)

    labels = part.cluster_of.copy()
    next_id = 0
    out = np.full(len(labels), UNCLUSTERED, dtype=np.int64)
    for c in range(part.n_clusters):
        members = np.flatnonzero(labels == c)
        if len(members) >= min_cluster_size:
            out[members] = next_id
            next_id += 1
    return graph, PlanePartition(cluster_of=out, modularity_trace=part.modularity_trace)
