"""Multi-view lifting, the coplanarity graph, and Leiden clustering."""

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from planekit import (
    CameraView,
    CoplanarityGraph,
    PlaneMaskImage,
    accumulate_edges,
    leiden_partition,
    lift_scene,
    modularity,
    occlusion_filter,
    project_points,
)


def look_down_camera(width=64, height=48, f=100.0):
    K = np.array([[f, 0.0, width / 2], [0.0, f, height / 2], [0.0, 0.0, 1.0]])
    return CameraView(K=K, R=np.eye(3), t=np.zeros(3), width=width, height=height)


def planted_graph(rng, sizes=(25, 25, 25, 25), p_in=0.3, p_out=0.01):
    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if labels[i] == labels[j] else p_out
            if rng.random() < p:
                edges.append((i, j, 1.0))
    return CoplanarityGraph.from_edges(n, edges), labels


def modularity_oracle(graph, labels, resolution=1.0):
    n = graph.n_nodes
    A = np.zeros((n, n))
    for key, w in zip(graph.edge_keys, graph.weights):
        i, j = divmod(int(key), n)
        A[i, j] = A[j, i] = w
    k = A.sum(axis=1)
    m = A.sum() / 2.0
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += A[i, j] - resolution * k[i] * k[j] / (2.0 * m)
    return q / (2.0 * m)


class TestProjection:
    def test_center_point_hits_principal_pixel(self):
        view = look_down_camera()
        pix, z, ok = project_points(np.array([[0.0, 0.0, 2.0]]), view)
        np.testing.assert_allclose(pix[0], [32.0, 24.0])
        assert z[0] == 2.0 and ok[0]

    def test_behind_camera_rejected(self):
        view = look_down_camera()
        _, _, ok = project_points(np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0]]), view)
        assert not ok.any()

    def test_out_of_frame_rejected(self):
        view = look_down_camera()
        _, _, ok = project_points(np.array([[10.0, 0.0, 2.0]]), view)
        assert not ok[0]

    def test_camera_center(self):
        rng = np.random.default_rng(1)
        theta = rng.random() * np.pi
        R = np.array([[np.cos(theta), -np.sin(theta), 0],
                      [np.sin(theta), np.cos(theta), 0],
                      [0, 0, 1.0]])
        t = rng.normal(size=3)
        view = CameraView(K=look_down_camera().K, R=R, t=t, width=64, height=48)
        cam = view.R @ view.center + view.t
        np.testing.assert_allclose(cam, 0.0, atol=1e-12)


class TestOcclusionFilter:
    def test_keeps_nearer_group(self):
        idx = np.arange(10)
        depths = np.array([1.0] * 5 + [2.0] * 5)
        kept = occlusion_filter(idx, depths, seed=0)
        assert sorted(kept.tolist()) == [0, 1, 2, 3, 4]

    def test_small_gap_keeps_all(self):
        idx = np.arange(10)
        depths = np.array([1.0] * 5 + [1.04] * 5)  # 4% < the 5% gap threshold
        kept = occlusion_filter(idx, depths, seed=0)
        assert len(kept) == 10

    def test_single_point_passthrough(self):
        np.testing.assert_array_equal(occlusion_filter([7], [3.0]), [7])


class TestCoplanarityGraph:
    def test_from_edges_parallel_edges_sum(self):
        # parallel edges stay as separate entries; degrees and modularity
        # treat them additively
        g = CoplanarityGraph.from_edges(4, [(0, 1, 1.0), (1, 0, 2.0), (2, 3, 1.0)])
        assert g.total_weight == pytest.approx(4.0)
        np.testing.assert_allclose(g.degrees(), [3.0, 3.0, 1.0, 1.0])

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            CoplanarityGraph.from_edges(3, [(1, 1, 1.0)])

    def test_modularity_matches_oracle(self, rng):
        g, _ = planted_graph(rng, sizes=(8, 8), p_in=0.6, p_out=0.1)
        for _ in range(5):
            labels = rng.integers(0, 3, g.n_nodes)
            assert modularity(g, labels) == pytest.approx(
                modularity_oracle(g, labels), abs=1e-12)

    def test_modularity_resolution(self, rng):
        g, labels = planted_graph(rng, sizes=(10, 10), p_in=0.5, p_out=0.05)
        for res in (0.5, 1.0, 2.0):
            assert modularity(g, labels, resolution=res) == pytest.approx(
                modularity_oracle(g, labels, res), abs=1e-12)


class TestLeiden:
    def test_two_cliques(self):
        edges = [(i, j, 1.0) for i in range(5) for j in range(i + 1, 5)]
        edges += [(i, j, 1.0) for i in range(5, 10) for j in range(i + 1, 10)]
        edges.append((0, 5, 0.1))
        g = CoplanarityGraph.from_edges(10, edges)
        part = leiden_partition(g, seed=0)
        assert part.n_clusters == 2
        assert len(set(part.cluster_of[:5])) == 1
        assert len(set(part.cluster_of[5:])) == 1

    def test_planted_partition_ari(self, rng):
        g, truth = planted_graph(rng)
        part = leiden_partition(g, seed=0)
        assert adjusted_rand_score(truth, part.cluster_of) >= 0.95

    def test_monotone_trace(self, rng):
        g, _ = planted_graph(rng)
        part = leiden_partition(g, seed=3)
        trace = part.modularity_trace
        assert len(trace) >= 1
        assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_deterministic(self, rng):
        g, _ = planted_graph(rng, sizes=(20, 20, 20))
        a = leiden_partition(g, seed=11)
        b = leiden_partition(g, seed=11)
        np.testing.assert_array_equal(a.cluster_of, b.cluster_of)

    def test_isolated_nodes_unclustered(self):
        g = CoplanarityGraph.from_edges(5, [(0, 1, 1.0), (1, 2, 1.0)])
        part = leiden_partition(g, seed=0)
        assert part.cluster_of[3] == -1 and part.cluster_of[4] == -1

    def test_clusters_are_connected(self, rng):
        g, _ = planted_graph(rng, sizes=(15, 15), p_in=0.4, p_out=0.02)
        part = leiden_partition(g, seed=5)
        adj = {i: set() for i in range(g.n_nodes)}
        for key in g.edge_keys:
            i, j = divmod(int(key), g.n_nodes)
            adj[i].add(j)
            adj[j].add(i)
        for c in range(part.n_clusters):
            members = set(np.flatnonzero(part.cluster_of == c).tolist())
            seen = {min(members)}
            stack = [min(members)]
            while stack:
                for nb in adj[stack.pop()] & members - seen:
                    seen.add(nb)
                    stack.append(nb)
            assert seen == members


def two_region_view():
    """A single top-down view whose plane mask splits the frame in half."""
    view = look_down_camera()
    labels = np.zeros((view.height, view.width), np.int32)
    labels[:, : view.width // 2] = 1
    labels[:, view.width // 2 :] = 2
    view.plane_mask = PlaneMaskImage(labels=labels)
    return view


class TestAccumulateEdges:
    def make_points(self, rng, n_per_side=12, z=2.0):
        # left instance maps to x < 0 in world at depth z
        left = np.column_stack([
            rng.uniform(-0.5, -0.1, n_per_side),
            rng.uniform(-0.4, 0.4, n_per_side),
            np.full(n_per_side, z),
        ])
        right = left.copy()
        right[:, 0] *= -1.0
        return left, right

    def test_votes_stay_within_instances(self, rng):
        left, right = self.make_points(rng)
        pts = np.concatenate([left, right])
        view = two_region_view()
        g = accumulate_edges([view], pts, seed=0)
        n = len(pts)
        for key in g.edge_keys:
            i, j = divmod(int(key), n)
            assert (i < 12) == (j < 12), "edge crosses instances"
        assert len(g.edge_keys) == 2 * (12 * 11 // 2)

    def test_votes_accumulate_across_views(self, rng):
        left, right = self.make_points(rng)
        pts = np.concatenate([left, right])
        views = [two_region_view(), two_region_view()]
        g = accumulate_edges(views, pts, seed=0)
        assert (g.weights == 2.0).all()

    def test_instance_point_cap(self, rng):
        left, _ = self.make_points(rng, n_per_side=30)
        view = two_region_view()
        g = accumulate_edges([view], left, seed=0, max_instance_points=10)
        assert g.weights.sum() == 10 * 9 // 2

    def test_occluded_points_do_not_vote(self, rng):
        left, _ = self.make_points(rng, n_per_side=10, z=2.0)
        far = left * np.array([2.0, 2.0, 2.0])  # same pixels, depth 4
        pts = np.concatenate([left, far])
        view = two_region_view()
        g = accumulate_edges([view], pts, seed=0)
        for key in g.edge_keys:
            i, j = divmod(int(key), len(pts))
            assert i < 10 and j < 10, "occluded point voted"


class TestLiftScene:
    def test_two_plane_scene(self, rng):
        n = 40
        left = np.column_stack([
            rng.uniform(-0.5, -0.1, n), rng.uniform(-0.4, 0.4, n), np.full(n, 2.0)])
        right = left * np.array([-1.0, 1.0, 1.0])
        pts = np.concatenate([left, right])
        view = two_region_view()
        graph, part = lift_scene(pts, [view], seed=0)
        assert part.n_clusters == 2
        assert len(set(part.cluster_of[:n])) == 1
        assert len(set(part.cluster_of[n:])) == 1
        assert part.cluster_of[0] != part.cluster_of[n]

    def test_small_clusters_demoted(self, rng):
        n = 40
        left = np.column_stack([
            rng.uniform(-0.5, -0.1, n), rng.uniform(-0.4, 0.4, n), np.full(n, 2.0)])
        right = left[:5] * np.array([-1.0, 1.0, 1.0])
        pts = np.concatenate([left, right])
        view = two_region_view()
        _, part = lift_scene(pts, [view], seed=0, min_cluster_size=30)
        assert part.n_clusters == 1
        assert (part.cluster_of[n:] == -1).all()

    def test_no_views_no_votes(self, rng):
        pts = rng.normal(size=(10, 3))
        graph, part = lift_scene(pts, [], seed=0)
        assert graph.total_weight == 0
        assert (part.cluster_of == -1).all()
