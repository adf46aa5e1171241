"""Per-view planar region detection from normal maps and instance masks.

Each candidate mask region is tested for normal coherence: if at least
PASS_RATIO of its pixels agree with the region's mean normal (cosine above
alpha), the largest 4-connected component of agreeing pixels becomes one
plane proposal.  Incoherent regions larger than sigma pixels are split
once by 2-means on their normals and each half is re-tested.  Proposals
from all masks are then greedily merged by mean-normal similarity into a
single per-view plane label image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

PASS_RATIO = 0.7          # fraction of pixels that must agree with the mean
ALPHA_DEFAULT = 0.98      # cosine threshold, an ~11.5 degree cone
SIGMA_DEFAULT = 200       # min pixel area for a K-means split attempt
KMEANS_MAX_ITERS = 100
_NORM_TOL = 1e-4          # valid normals must be unit within this

# 4-connectivity structuring element for component labeling
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class NormalMap:
    """(H, W, 3) per-pixel unit normals; (0, 0, 0) marks invalid pixels."""

    data: np.ndarray
    frame: str = "world"  # "world" or "camera"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("normal map must be (H, W, 3)")
        norms = np.linalg.norm(self.data, axis=2)
        bad = (norms > _NORM_TOL) & (np.abs(norms - 1.0) > _NORM_TOL)
        if bad.any():
            raise ValueError("normal map contains non-unit, non-sentinel vectors")

    @property
    def shape(self):
        return self.data.shape[:2]

    @property
    def valid(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=2) > 0.5


@dataclass
class MaskSet:
    """Binary candidate region masks for one view (may overlap)."""

    masks: list  # of (H, W) bool arrays
    shape: tuple

    def __post_init__(self):
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]
        for m in self.masks:
            if m.shape != tuple(self.shape):
                raise ValueError("mask dimensions disagree with the set shape")

    @classmethod
    def from_instance_map(cls, labels) -> "MaskSet":
        lab = np.asarray(labels)
        ids = np.unique(lab)
        ids = ids[ids > 0]
        return cls(masks=[lab == i for i in ids], shape=lab.shape)


@dataclass
class PlaneProposal:
    """One connected candidate plane region and its mean normal."""

    pixels: np.ndarray       # (H, W) bool
    mean_normal: np.ndarray  # (3,) unit

    @property
    def pixel_count(self) -> int:
        return int(self.pixels.sum())


@dataclass
class PlaneMaskImage:
    """Per-pixel plane instance labels; 0 is non-planar background."""

    labels: np.ndarray  # (H, W) int32

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)

    @property
    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids > 0]

    def mask_for(self, instance_id: int) -> np.ndarray:
        return self.labels == instance_id


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def region_similarity(normals):
    """Mean unit normal of a region and per-pixel cosines against it.

    normals: (N, 3) unit vectors.  Raises on an empty region and when the
    arithmetic mean vanishes (opposing normals).
    """
    arr = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("empty region")
    mean = arr.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise ValueError("degenerate region: mean normal vanishes")
    mean = mean / norm
    return mean, arr @ mean


def kmeans(vectors, k: int, seed: int = 0):
    """Seeded k-means++ with Lloyd iterations to an assignment fixpoint.

    Returns (assignments, centroids).  On return every vector is assigned
    to its nearest centroid (ties to the lowest index).  When all vectors
    are identical the centroids coincide and everything lands in cluster 0.
    """
    pts = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n = len(pts)
    if n < k:
        raise ValueError(f"k-means needs at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = pts[rng.integers(n)]
        else:
            r = rng.random() * total
            centroids[j] = pts[np.searchsorted(np.cumsum(d2), r)]
        d2 = np.minimum(d2, ((pts - centroids[j]) ** 2).sum(axis=1))

    def nearest(cents):
        dist = ((pts[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(dist, axis=1)

    assign = nearest(centroids)
    for _ in range(KMEANS_MAX_ITERS):
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = pts[members].mean(axis=0)
        new_assign = nearest(centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign, centroids


def _largest_component(mask) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=_CROSS)
    if count == 0:
        return np.zeros_like(mask)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    return labels == (1 + int(np.argmax(sizes)))


def detect_planes_in_mask(
    normals: NormalMap,
    mask,
    alpha: float = ALPHA_DEFAULT,
    sigma: int = SIGMA_DEFAULT,
    seed: int = 0,
    _depth: int = 1,
) -> list:
    """Plane proposals inside one candidate mask.

    Invalid normal pixels never count toward the pass ratio or the area.
    The K-means split recurses exactly once.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != normals.shape:
        raise ValueError("mask dimensions disagree with the normal map")
    valid = mask & normals.valid
    count = int(valid.sum())
    if count == 0:
        return []

    rows, cols = np.nonzero(valid)
    vecs = normals.data[rows, cols]
    mean, sims = region_similarity(vecs)
    passing = sims > alpha

    if passing.mean() >= PASS_RATIO:
        pass_img = np.zeros(mask.shape, dtype=bool)
        pass_img[rows[passing], cols[passing]] = True
        component = _largest_component(pass_img)
        comp_mean, _ = region_similarity(normals.data[component])
        return [PlaneProposal(pixels=component, mean_normal=comp_mean)]

    if _depth > 0 and count > sigma:
        assign, _ = kmeans(vecs, 2, seed=seed)
        out = []
        for c in (0, 1):
            sub = np.zeros(mask.shape, dtype=bool)
            members = assign == c
            if not members.any():
                continue
            sub[rows[members], cols[members]] = True
            out.extend(
                detect_planes_in_mask(
                    normals, sub, alpha, sigma, seed=seed + 1 + c, _depth=_depth - 1
                )
            )
        return out

    return []


def merge_proposals(proposals, alpha: float = ALPHA_DEFAULT, shape=None) -> PlaneMaskImage:
    """Greedy normal-similarity merge into a mutually exclusive label image.

    Pops the first proposal and absorbs, in order, every remaining proposal
    whose mean normal stays within alpha of the (count-weighted) running
    mean; repeats until the worklist drains.  Instance IDs are sequential
    from 1; overlapping pixels keep the earliest ID.
    """
    if not proposals:
        if shape is None:
            raise ValueError("shape required for an empty proposal list")
        return PlaneMaskImage(labels=np.zeros(shape, dtype=np.int32))

    shape = proposals[0].pixels.shape
    worklist = list(proposals)
    groups = []
    while worklist:
        cur = worklist.pop(0)
        pixels = cur.pixels.copy()
        mean = cur.mean_normal.copy()
        weight = cur.pixel_count
        rest = []
        for p in worklist:
            if float(mean @ p.mean_normal) > alpha:
                pixels |= p.pixels
                merged = weight * mean + p.pixel_count * p.mean_normal
                mean = merged / np.linalg.norm(merged)
                weight += p.pixel_count
            else:
                rest.append(p)
        worklist = rest
        groups.append(pixels)

    labels = np.zeros(shape, dtype=np.int32)
    for i, pixels in enumerate(groups, start=1):
        labels[pixels & (labels == 0)] = i
    return PlaneMaskImage(labels=labels)


def detect_view_planes(
    normals: NormalMap,
    masks: MaskSet,
    alpha: float = ALPHA_DEFAULT,
    sigma: int = SIGMA_DEFAULT,
    seed: int = 0,
) -> PlaneMaskImage:
    """Full per-view pipeline: detect per mask, then merge across masks."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if sigma < 1:
        raise ValueError("sigma must be a positive pixel count")
    if tuple(masks.shape) != tuple(normals.shape):
        raise ValueError("mask dimensions disagree with the normal map")

    proposals = []
    for j, mask in enumerate(masks.masks):
        sub_seed = int(np.random.SeedSequence((seed, j)).generate_state(1)[0])
        proposals.extend(detect_planes_in_mask(normals, mask, alpha, sigma, seed=sub_seed))
    return merge_proposals(proposals, alpha, shape=normals.shape)
