"""Constraint-preserving point optimization with dynamic reclassification.

Points live in one of two modes: Free points carry raw xyz, planar points
carry barycentric weights over a shared 3-point plane basis.  Gradients on
planar points are chain-ruled through the basis Jacobian, so optimization
can never push a planar point off its plane; the plane itself moves only
through its basis points, which collect the weighted member gradients at a
lower learning rate.

Misclassified points reveal themselves through persistently large
gradients.  During scheduled windows the per-point gradient magnitudes are
accumulated; at each window end the top planar points are compared against
the non-planar population and the outliers are reverted to Free.  A
reverted point is never re-planarized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .planefit import PlaneBasis

log = logging.getLogger(__name__)

LR_POINT_DEFAULT = 0.02
LR_BASIS_FACTOR = 0.1    # basis points step at one tenth of the point rate


@dataclass
class ParamPoint:
    """One optimizable point: planar (plane_id, w1, w2) or free (xyz)."""

    plane_id: int = -1
    w1: float = 0.0
    w2: float = 0.0
    xyz: np.ndarray | None = None

    @classmethod
    def planar(cls, plane_id: int, w1: float, w2: float) -> "ParamPoint":
        return cls(plane_id=int(plane_id), w1=float(w1), w2=float(w2))

    @classmethod
    def free(cls, xyz) -> "ParamPoint":
        return cls(plane_id=-1, xyz=np.asarray(xyz, dtype=np.float64))

    @property
    def is_planar(self) -> bool:
        return self.plane_id >= 0


class ReparamState:
    """Array-packed scene state: per-point mode plus stacked plane bases."""

    def __init__(self, plane_id, weights, xyz, bases):
        self.plane_id = np.asarray(plane_id, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.xyz = np.asarray(xyz, dtype=np.float64)
        self.bases = np.asarray(bases, dtype=np.float64)  # (P, 3, 3)
        n = len(self.plane_id)
        if self.weights.shape != (n, 2) or self.xyz.shape != (n, 3):
            raise ValueError("inconsistent state arrays")
        if self.plane_id.max(initial=-1) >= len(self.bases):
            raise ValueError("plane_id out of range")

    @classmethod
    def from_points(cls, points: list[ParamPoint], bases: list[PlaneBasis]) -> "ReparamState":
        n = len(points)
        plane_id = np.full(n, -1, dtype=np.int64)
        weights = np.zeros((n, 2))
        xyz = np.zeros((n, 3))
        for i, p in enumerate(points):
            if p.is_planar:
                plane_id[i] = p.plane_id
                weights[i] = (p.w1, p.w2)
            else:
                xyz[i] = p.xyz
        stacked = (
            np.stack([b.as_array() for b in bases])
            if bases
            else np.zeros((0, 3, 3))
        )
        return cls(plane_id, weights, xyz, stacked)

    def to_points(self) -> list[ParamPoint]:
        out = []
        for i in range(len(self.plane_id)):
            if self.plane_id[i] >= 0:
                out.append(ParamPoint.planar(self.plane_id[i], *self.weights[i]))
            else:
                out.append(ParamPoint.free(self.xyz[i]))
        return out

    def __len__(self) -> int:
        return len(self.plane_id)

    @property
    def planar_mask(self) -> np.ndarray:
        return self.plane_id >= 0

    def positions(self) -> np.ndarray:
        """Reconstruct all point positions; planar points land exactly on-plane."""
        pos = self.xyz.copy()
        m = self.planar_mask
        if m.any():
            b = self.bases[self.plane_id[m]]            # (K, 3, 3)
            w1 = self.weights[m, 0:1]
            w2 = self.weights[m, 1:2]
            w3 = 1.0 - w1 - w2
            pos[m] = w1 * b[:, 0] + w2 * b[:, 1] + w3 * b[:, 2]
        return pos

    def revert(self, indices) -> None:
        """Demote planar points to Free at their current reconstructed positions."""
        idx = np.asarray(indices, dtype=np.int64)
        if len(idx) == 0:
            return
        pos = self.positions()
        self.xyz[idx] = pos[idx]
        self.plane_id[idx] = -1
        self.weights[idx] = 0.0

    def copy(self) -> "ReparamState":
        return ReparamState(
            self.plane_id.copy(), self.weights.copy(), self.xyz.copy(), self.bases.copy()
        )


@dataclass
class GradStats:
    """Accumulated gradient magnitudes over one reclassification window."""

    grad_sum: np.ndarray
    count: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "GradStats":
        return cls(grad_sum=np.zeros(n), count=np.zeros(n, dtype=np.int64))

    def add(self, grad_magnitudes) -> None:
        self.grad_sum += grad_magnitudes
        self.count += 1

    def averages(self) -> np.ndarray:
        out = np.zeros_like(self.grad_sum)
        nz = self.count > 0
        out[nz] = self.grad_sum[nz] / self.count[nz]
        return out

    def reset(self) -> None:
        self.grad_sum[:] = 0.0
        self.count[:] = 0


@dataclass
class DgrSchedule:
    """Reclassification windows tied to the densification calendar.

    Windows run during the last window_tail iterations of every interval
    while densification is active, plus one final_window-long pass at
    final_iter.
    """

    densify_start: int = 500
    densify_end: int = 15000
    interval: int = 100
    window_tail: int = 50
    final_iter: int = 20000
    final_window: int = 100


def dgr_active(iteration: int, schedule: DgrSchedule = DgrSchedule()) -> bool:
    s = schedule
    in_densify = (
        s.densify_start <= iteration < s.densify_end
        and iteration % s.interval >= s.interval - s.window_tail
    )
    in_final = s.final_iter <= iteration < s.final_iter + s.final_window
    return in_densify or in_final


def dgr_select(
    planar_avg,
    nonplanar_avg,
    planar_frac: float = 0.05,
    nonplanar_frac: float = 0.2,
) -> np.ndarray:
    """Indices (into planar_avg) of planar points to revert.

    Threshold T is the mean of the top nonplanar_frac non-planar averages;
    candidates are the top ceil(planar_frac * N) planar averages (ties broken
    by index); those strictly above T are reverted.  With no non-planar
    points T is undefined and nothing is reverted.
    """
    for frac in (planar_frac, nonplanar_frac):
        if not 0.0 < frac <= 1.0:
            raise ValueError("fractions must lie in (0, 1]")
    p = np.asarray(planar_avg, dtype=np.float64)
    q = np.asarray(nonplanar_avg, dtype=np.float64)
    if len(p) == 0:
        return np.empty(0, dtype=np.int64)
    if len(q) == 0:
        log.warning("dgr_select: no non-planar points, skipping reversion")
        return np.empty(0, dtype=np.int64)

    k_np = int(np.ceil(nonplanar_frac * len(q)))
    top_np = np.sort(q)[::-1][:k_np]
    threshold = float(top_np.mean())

    k_p = int(np.ceil(planar_frac * len(p)))
    order = np.lexsort((np.arange(len(p)), -p))  # by average desc, index asc
    candidates = order[:k_p]
    return np.sort(candidates[p[candidates] > threshold])


def optimize_step(state: ReparamState, grads, lr_point: float, lr_basis: float | None = None) -> None:
    """One in-place gradient step on positions, weights and bases.

    grads holds d(loss)/d(position) per point.  Free points step directly;
    planar points chain the gradient through the 3x2 basis Jacobian
    [f1 - f3, f2 - f3] onto (w1, w2); each basis point accumulates the
    weight-scaled gradients of its members.
    """
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != (len(state), 3):
        raise ValueError("gradient array must be (n_points, 3)")
    if lr_basis is None:
        lr_basis = LR_BASIS_FACTOR * lr_point

    free = ~state.planar_mask
    state.xyz[free] -= lr_point * g[free]

    m = state.planar_mask
    if not m.any():
        return
    pid = state.plane_id[m]
    b = state.bases[pid]
    gm = g[m]
    j1 = b[:, 0] - b[:, 2]
    j2 = b[:, 1] - b[:, 2]
    gw = np.stack([(gm * j1).sum(axis=1), (gm * j2).sum(axis=1)], axis=1)
    w = state.weights[m]
    w3 = 1.0 - w[:, 0] - w[:, 1]

    basis_grad = np.zeros_like(state.bases)
    np.add.at(basis_grad[:, 0], pid, w[:, 0:1] * gm)
    np.add.at(basis_grad[:, 1], pid, w[:, 1:2] * gm)
    np.add.at(basis_grad[:, 2], pid, w3[:, None] * gm)

    state.weights[m] = w - lr_point * gw
    state.bases -= lr_basis * basis_grad


@dataclass
class FitResult:
    state: ReparamState
    loss_trace: np.ndarray                  # (iters,)
    reverted: list                          # (iteration, global indices) pairs
    planar_count: np.ndarray                # (iters,) planar points per iteration

    @property
    def reverted_ids(self) -> np.ndarray:
        if not self.reverted:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([ids for _, ids in self.reverted])


def fit_planar_scene(
    state: ReparamState,
    targets,
    iters: int,
    lr_point: float = LR_POINT_DEFAULT,
    lr_basis: float | None = None,
    schedule: DgrSchedule = DgrSchedule(),
) -> FitResult:
    """Gradient-descend sum |reconstruct - target|^2 with windowed reclassification.

    Gradient statistics are collected only inside active windows; at each
    window end the reclassification comparison runs and selected planar
    points are reverted to Free (one way, never back).  The run is fully
    deterministic.
    """
    tgt = np.asarray(targets, dtype=np.float64)
    if tgt.shape != (len(state), 3):
        raise ValueError("targets must be (n_points, 3)")

    stats = GradStats.zeros(len(state))
    loss_trace = np.zeros(iters)
    planar_count = np.zeros(iters, dtype=np.int64)
    reverted: list = []

    for it in range(iters):
        pos = state.positions()
        resid = pos - tgt
        loss_trace[it] = (resid * resid).sum()
        planar_count[it] = int(state.planar_mask.sum())
        grads = 2.0 * resid

        if dgr_active(it, schedule):
            stats.add(np.linalg.norm(grads, axis=1))
            if not dgr_active(it + 1, schedule):
                avgs = stats.averages()
                planar_idx = np.flatnonzero(state.planar_mask)
                free_idx = np.flatnonzero(~state.planar_mask)
                sel = dgr_select(avgs[planar_idx], avgs[free_idx])
                if len(sel):
                    ids = planar_idx[sel]
                    state.revert(ids)
                    reverted.append((it, ids))
                stats.reset()

        optimize_step(state, grads, lr_point, lr_basis)

    return FitResult(
        state=state,
        loss_trace=loss_trace,
        reverted=reverted,
        planar_count=planar_count,
    )
