"""Reparameterized optimizer: gradients, stepping, reclassification."""

import numpy as np
import pytest

from planekit import (
    DgrSchedule,
    ParamPoint,
    ReparamState,
    dgr_active,
    dgr_select,
    fit_planar_scene,
    from_barycentric,
    optimize_step,
)
from planekit.optim import GradStats

from conftest import random_basis


def toy_state(rng, n_planar=10, n_free=4):
    basis = random_basis(rng)
    pts = [ParamPoint.planar(0, *rng.normal(size=2)) for _ in range(n_planar)]
    pts += [ParamPoint.free(rng.normal(size=3)) for _ in range(n_free)]
    return ReparamState.from_points(pts, [basis]), basis


class TestReparamState:
    def test_positions_on_plane(self, rng):
        state, basis = toy_state(rng)
        pos = state.positions()
        planar = pos[state.planar_mask]
        assert np.abs(basis.plane().signed_distance(planar)).max() <= 1e-9

    def test_round_trip_points(self, rng):
        state, basis = toy_state(rng)
        again = ReparamState.from_points(state.to_points(), [basis])
        np.testing.assert_array_equal(again.plane_id, state.plane_id)
        np.testing.assert_allclose(again.weights, state.weights)
        np.testing.assert_allclose(again.positions(), state.positions(), atol=1e-12)

    def test_revert_freezes_position(self, rng):
        state, _ = toy_state(rng)
        pos_before = state.positions()
        state.revert([2, 5])
        assert not state.planar_mask[2] and not state.planar_mask[5]
        np.testing.assert_allclose(state.positions(), pos_before, atol=1e-12)

    def test_inconsistent_arrays_raise(self):
        with pytest.raises(ValueError):
            ReparamState(np.zeros(3, dtype=int), np.zeros((2, 2)), np.zeros((3, 3)), np.zeros((1, 3, 3)))


class TestOptimizeStep:
    def test_weight_gradient_matches_finite_differences(self, rng):
        state, _ = toy_state(rng, n_planar=8, n_free=0)
        tgt = rng.normal(size=(8, 3))

        def loss_of(s):
            r = s.positions() - tgt
            return (r * r).sum()

        grads = 2.0 * (state.positions() - tgt)
        before = state.weights.copy()
        stepped = state.copy()
        optimize_step(stepped, grads, lr_point=1e-3, lr_basis=0.0)
        analytic = (before - stepped.weights) / 1e-3

        h = 1e-6
        for i in range(8):
            for j in range(2):
                sp, sm = state.copy(), state.copy()
                sp.weights[i, j] += h
                sm.weights[i, j] -= h
                fd = (loss_of(sp) - loss_of(sm)) / (2 * h)
                assert abs(fd - analytic[i, j]) <= 1e-5 * max(1.0, abs(fd))

    def test_free_points_step_directly(self, rng):
        state, _ = toy_state(rng, n_planar=0, n_free=5)
        g = rng.normal(size=(5, 3))
        xyz0 = state.xyz.copy()
        optimize_step(state, g, lr_point=0.1)
        np.testing.assert_allclose(state.xyz, xyz0 - 0.1 * g, atol=1e-15)

    def test_membership_never_changes(self, rng):
        state, _ = toy_state(rng)
        ids0 = state.plane_id.copy()
        tgt = rng.normal(size=(len(state), 3))
        for _ in range(1000):
            grads = 2.0 * (state.positions() - tgt)
            optimize_step(state, grads, lr_point=0.01)
        np.testing.assert_array_equal(state.plane_id, ids0)

    def test_bad_gradient_shape(self, rng):
        state, _ = toy_state(rng)
        with pytest.raises(ValueError):
            optimize_step(state, np.zeros((2, 3)), lr_point=0.1)


class TestDgrSchedule:
    def test_active_iteration_count(self):
        active = sum(dgr_active(i) for i in range(30_000))
        assert active == 7350

    def test_matches_brute_schedule(self):
        # windows occupy the last window_tail iterations of each interval
        s = DgrSchedule()
        for i in range(0, 30_000, 7):
            in_densify = (
                s.densify_start <= i < s.densify_end
                and i % s.interval >= s.interval - s.window_tail
            )
            in_final = s.final_iter <= i < s.final_iter + s.final_window
            assert dgr_active(i) == (in_densify or in_final), i

    def test_inactive_outside_range(self):
        assert not dgr_active(0)
        assert not dgr_active(499)
        assert not dgr_active(29_999)


class TestDgrSelect:
    @staticmethod
    def oracle(p, q, pf=0.05, nf=0.2):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        if len(p) == 0 or len(q) == 0:
            return np.empty(0, np.int64)
        thr = np.mean(np.sort(q)[::-1][: int(np.ceil(nf * len(q)))])
        order = sorted(range(len(p)), key=lambda i: (-p[i], i))
        cand = order[: int(np.ceil(pf * len(p)))]
        return np.sort([i for i in cand if p[i] > thr]).astype(np.int64)

    def test_matches_oracle_with_ties(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(10, 5000))
            m = int(rng.integers(10, 5000))
            if seed % 2:
                p = rng.integers(0, 40, n) / 3.0
                q = rng.integers(0, 40, m) / 3.0
            else:
                p = rng.exponential(size=n)
                q = rng.exponential(size=m)
            np.testing.assert_array_equal(dgr_select(p, q), self.oracle(p, q), err_msg=f"seed {seed}")

    def test_no_nonplanar_population(self):
        assert len(dgr_select(np.ones(10), np.empty(0))) == 0

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            dgr_select(np.ones(4), np.ones(4), planar_frac=0.0)


class TestGradStats:
    def test_windowed_average(self):
        stats = GradStats.zeros(3)
        stats.add([1.0, 2.0, 3.0])
        stats.add([3.0, 2.0, 1.0])
        np.testing.assert_allclose(stats.averages(), [2.0, 2.0, 2.0])
        stats.reset()
        stats.add([4.0, 0.0, 0.0])
        np.testing.assert_allclose(stats.averages(), [4.0, 0.0, 0.0])


class TestFitPlanarScene:
    def test_loss_decreases_and_converges(self, rng):
        basis = random_basis(rng, min_area=0.5)
        w = rng.normal(size=(30, 2))
        targets = from_barycentric(w, basis)
        pts = [ParamPoint.planar(0, *(wi + rng.normal(scale=0.1, size=2))) for wi in w]
        state = ReparamState.from_points(pts, [basis])
        res = fit_planar_scene(state, targets, iters=2000)
        assert res.loss_trace[-1] < res.loss_trace[0] * 1e-6
        # on-plane targets and no free population: nothing gets reverted
        assert len(res.reverted_ids) == 0

    def test_off_plane_targets_get_reverted(self, rng):
        basis = random_basis(rng, min_area=0.5)
        w = rng.normal(size=(40, 2))
        targets = from_barycentric(w, basis)
        targets[7] += basis.plane().normal * 0.5
        pts = [ParamPoint.planar(0, *wi) for wi in w]
        # free points give the reclassification threshold a population
        free_targets = rng.normal(size=(10, 3))
        pts += [ParamPoint.free(t + rng.normal(scale=0.05, size=3)) for t in free_targets]
        state = ReparamState.from_points(pts, [basis])
        res = fit_planar_scene(state, np.concatenate([targets, free_targets]), iters=2000)
        assert 7 in res.reverted_ids.tolist()
        assert res.loss_trace[-1] <= 1e-8

    def test_planar_count_trace(self, rng):
        state, _ = toy_state(rng, n_planar=6, n_free=2)
        tgt = state.positions()
        res = fit_planar_scene(state, tgt, iters=50)
        assert res.planar_count.shape == (50,)
        assert (res.planar_count == 6).all()
