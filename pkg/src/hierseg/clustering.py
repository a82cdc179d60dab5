"""Adaptive region merging over a patch grid.

Starting from one region per patch, the engine repeatedly merges the pair
of adjacent regions with the highest cosine similarity between their mean
features. Each configured threshold, visited in decreasing order, fires a
snapshot of the surviving regions the first time the best available
similarity drops below it; merging then continues toward the next
threshold. Homogeneous images therefore collapse into few regions while
cluttered ones keep many.

The pair queue is a heap with lazy invalidation: merged regions get fresh
ids, so any queued pair naming a dead id is stale and is discarded on pop.
A region's mean feature never changes while it is alive, which keeps every
queued similarity for a pair of live regions current. Region features are
kept in preallocated arrays indexed by region id so that the similarity
updates after a merge run as one vectorized pass over the new neighbors.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ZeroVectorError
from .features import FeatureMap


@dataclass
class Region:
    """A connected set of patches with the running sum of their features.

    ``feature`` (the unweighted mean over member patches) is derived from
    ``feature_sum`` so that merges stay exact: the sum of a merged region
    is the sum of its parts.
    """

    id: int
    patches: set[tuple[int, int]]
    feature_sum: np.ndarray
    neighbor_ids: set[int] = field(default_factory=set)
    alive: bool = True

    @property
    def feature(self) -> np.ndarray:
        return self.feature_sum / len(self.patches)

    def copy(self) -> "Region":
        return Region(
            self.id, set(self.patches), self.feature_sum.copy(), set(self.neighbor_ids), self.alive
        )


@dataclass
class MergeSnapshot:
    """Surviving regions at the moment a merge threshold fired."""

    threshold: float
    regions: list[Region]
    merge_count: int


@dataclass(frozen=True)
class ClusterConfig:
    thresholds: tuple[float, ...] = (0.4, 0.2, 0.1)
    connectivity: int = 4

    def __post_init__(self) -> None:
        if not self.thresholds:
            raise ConfigError("at least one merge threshold is required")
        if any(not (0.0 < t < 1.0) for t in self.thresholds):
            raise ConfigError(f"thresholds must lie in (0, 1): {self.thresholds}")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError(f"thresholds must be strictly decreasing: {self.thresholds}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")


def grid_neighbors(r: int, c: int, grid_h: int, grid_w: int, connectivity: int = 4):
    """Yield in-bounds neighbor cells of (r, c)."""
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    for dr, dc in steps:
        nr, nc = r + dr, c + dc
        if 0 <= nr < grid_h and 0 <= nc < grid_w:
            yield nr, nc


def _grid_edges(grid_h: int, grid_w: int, connectivity: int) -> tuple[np.ndarray, np.ndarray]:
    """All undirected adjacency pairs (a < b) as two index arrays."""
    idx = np.arange(grid_h * grid_w).reshape(grid_h, grid_w)
    lows = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    highs = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    if connectivity == 8:
        lows += [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()]
        highs += [idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
    return np.concatenate(lows), np.concatenate(highs)


def build_adjacency(fm: FeatureMap, connectivity: int = 4) -> list[Region]:
    """One singleton region per patch, with grid-adjacency neighbor sets.

    Region ids equal the row-major patch index, so interior cells get 4
    neighbors, edges 3, and corners 2 (under 4-connectivity).
    """
    h, w = fm.grid_h, fm.grid_w
    data = fm.data.astype(np.float64)
    regions = []
    for r in range(h):
        for c in range(w):
            rid = r * w + c
            neighbors = {nr * w + nc for nr, nc in grid_neighbors(r, c, h, w, connectivity)}
            regions.append(Region(rid, {(r, c)}, data[r, c].copy(), neighbors))
    return regions


def cluster(fm: FeatureMap, cfg: ClusterConfig = ClusterConfig()) -> list[MergeSnapshot]:
    """Run the merge loop and return one snapshot per configured threshold.

    Merging executes while the best adjacent-pair similarity is >= the
    active threshold; when it falls below, the current partition is
    recorded and the next (lower) threshold becomes active. If everything
    merges into a single region before the last threshold fires, the
    remaining snapshots all record that single-region state.
    """
    snapshots, _ = cluster_with_trace(fm, cfg)
    return snapshots


def cluster_with_trace(
    fm: FeatureMap, cfg: ClusterConfig = ClusterConfig()
) -> tuple[list[MergeSnapshot], list[tuple[float, float]]]:
    """Like :func:`cluster`, also returning (similarity, active threshold)
    for every executed merge."""
    h, w, dim = fm.grid_h, fm.grid_w, fm.dim
    n = h * w
    capacity = 2 * n  # n singletons plus at most n - 1 merged regions

    sums = np.zeros((capacity, dim))
    counts = np.zeros(capacity, dtype=np.int64)
    means = np.zeros((capacity, dim))
    norms = np.zeros(capacity)
    sums[:n] = fm.data.reshape(n, dim).astype(np.float64)
    counts[:n] = 1
    means[:n] = sums[:n]
    norms[:n] = np.linalg.norm(means[:n], axis=1)
    if n > 1 and not norms[:n].all():
        raise ZeroVectorError("zero-norm patch feature has no cosine similarity")

    patches: dict[int, set[tuple[int, int]]] = {
        r * w + c: {(r, c)} for r in range(h) for c in range(w)
    }
    neighbors: dict[int, set[int]] = {rid: set() for rid in patches}
    low, high = _grid_edges(h, w, cfg.connectivity)
    for a, b in zip(low.tolist(), high.tolist()):
        neighbors[a].add(b)
        neighbors[b].add(a)

    sims = (means[low] * means[high]).sum(axis=1) / (norms[low] * norms[high])
    np.clip(sims, -1.0, 1.0, out=sims)
    # (negated similarity, low id, high id); ties resolve to the smallest pair
    heap = [(-s, a, b) for s, a, b in zip(sims.tolist(), low.tolist(), high.tolist())]
    heapq.heapify(heap)

    next_id = n
    merge_count = 0
    snapshots: list[MergeSnapshot] = []
    merge_trace: list[tuple[float, float]] = []

    def take_snapshot(threshold: float) -> None:
        live = [
            Region(rid, set(patches[rid]), sums[rid].copy(), set(neighbors[rid]))
            for rid in sorted(patches)
        ]
        snapshots.append(MergeSnapshot(threshold, live, merge_count))

    ti = 0
    while heap:
        neg_sim, a, b = heapq.heappop(heap)
        if a not in patches or b not in patches:
            continue  # stale: one side was merged away
        sim = -neg_sim
        while ti < len(cfg.thresholds) and sim < cfg.thresholds[ti]:
            take_snapshot(cfg.thresholds[ti])
            ti += 1
        if ti == len(cfg.thresholds):
            return snapshots, merge_trace
        merge_trace.append((sim, cfg.thresholds[ti]))

        new_id = next_id
        next_id += 1
        merge_count += 1
        sums[new_id] = sums[a] + sums[b]
        counts[new_id] = counts[a] + counts[b]
        means[new_id] = sums[new_id] / counts[new_id]
        norms[new_id] = np.linalg.norm(means[new_id])

        pa, pb = patches.pop(a), patches.pop(b)
        if len(pa) < len(pb):
            pa, pb = pb, pa
        pa.update(pb)
        patches[new_id] = pa
        merged_nb = (neighbors.pop(a) | neighbors.pop(b)) - {a, b}
        neighbors[new_id] = merged_nb
        if merged_nb:
            nb_ids = sorted(merged_nb)
            nb_arr = np.asarray(nb_ids, dtype=np.int64)
            for nb in nb_ids:
                nb_set = neighbors[nb]
                nb_set.discard(a)
                nb_set.discard(b)
                nb_set.add(new_id)
            denom = norms[nb_arr] * norms[new_id]
            if not denom.all():
                raise ZeroVectorError("zero-norm region mean has no cosine similarity")
            nb_sims = (means[nb_arr] @ means[new_id]) / denom
            np.clip(nb_sims, -1.0, 1.0, out=nb_sims)
            for nb, s in zip(nb_ids, nb_sims.tolist()):
                heapq.heappush(heap, (-s, nb, new_id))

    while ti < len(cfg.thresholds):
        take_snapshot(cfg.thresholds[ti])
        ti += 1
    return snapshots, merge_trace


def region_to_mask(
    region: Region, patch_size: int, grid_h: int, grid_w: int
) -> np.ndarray:
    """Paint each member patch as a patch_size x patch_size pixel block."""
    if not region.patches:
        raise ValueError("cannot rasterize an empty region")
    grid = np.zeros((grid_h, grid_w), dtype=bool)
    rows, cols = zip(*region.patches)
    grid[list(rows), list(cols)] = True
    return np.repeat(np.repeat(grid, patch_size, axis=0), patch_size, axis=1)
