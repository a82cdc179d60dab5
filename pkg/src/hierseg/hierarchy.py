"""Coverage relations between masks and whole/part/subpart levels.

Mask B covers mask A when (1) more than the coverage threshold of A's
pixels lie inside B, (2) less than that threshold of B's pixels lie inside
A, and (3) B has the smallest area among all masks satisfying the first
two conditions for A. Both threshold comparisons are strict, so the
boundary ratio fails either condition. Conditions 1 and 2 together force
the covering mask to be strictly larger, which makes the parent relation
acyclic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import CyclicCoverageError
from .postprocess import MaskRecord


class HierLevel(IntEnum):
    """Hierarchy levels; values double as output category ids."""

    WHOLE = 1
    PART = 2
    SUBPART = 3


def _level_for_depth(depth: int) -> HierLevel:
    if depth == 0:
        return HierLevel.WHOLE
    if depth == 1:
        return HierLevel.PART
    return HierLevel.SUBPART


@dataclass
class HierarchyForest:
    """Parent pointers and levels over a list of masks (by index)."""

    parent: list[int | None]
    level: list[HierLevel]
    cover_threshold: float = 90.0

    n_nodes: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_nodes = len(self.parent)
        if len(self.level) != self.n_nodes:
            raise ValueError("parent and level lists must have equal length")

    def depth(self, node: int) -> int:
        d = 0
        seen = {node}
        cur = self.parent[node]
        while cur is not None:
            if cur in seen:
                raise CyclicCoverageError(f"cycle through node {cur}")
            seen.add(cur)
            d += 1
            cur = self.parent[cur]
        return d

    def roots(self) -> list[int]:
        return [i for i, p in enumerate(self.parent) if p is None]

    def children(self, node: int) -> list[int]:
        return [i for i, p in enumerate(self.parent) if p == node]


def _coverage_candidates(
    areas: np.ndarray, inter: np.ndarray, a: int, threshold_frac: float
) -> list[int]:
    """Indices b passing coverage conditions 1 and 2 for mask a."""
    out = []
    for b in range(len(areas)):
        if b == a:
            continue
        if inter[a, b] > threshold_frac * areas[a] and inter[a, b] < threshold_frac * areas[b]:
            out.append(b)
    return out


def covers(
    a: np.ndarray,
    b: np.ndarray,
    cover_percent: float,
    candidates: Sequence[np.ndarray],
) -> bool:
    """True when mask ``b`` covers mask ``a`` among ``candidates``.

    ``candidates`` is the full mask set of the image (it must contain
    ``b``); condition 3's minimality quantifies over the candidates that
    pass conditions 1 and 2 for ``a``, with ties broken by lowest index.
    """
    masks = list(candidates)
    b_index = next(
        (i for i, m in enumerate(masks) if m is b or np.array_equal(m, b)), None
    )
    if b_index is None:
        raise ValueError("b must be one of the candidate masks")
    a_flat = np.asarray(a, dtype=bool).ravel().astype(np.int64)
    stacked = np.stack(
        [np.asarray(m, dtype=bool).ravel() for m in masks]
    ).astype(np.int64)
    areas = stacked.sum(axis=1)
    inter_with_a = stacked @ a_flat
    frac = cover_percent / 100.0
    area_a = int(a_flat.sum())

    # a itself never passes: condition 2 would need |a| < frac * |a|
    passing = [
        i
        for i in range(len(masks))
        if inter_with_a[i] > frac * area_a and inter_with_a[i] < frac * areas[i]
    ]
    if not passing:
        return False
    best = min(passing, key=lambda i: (areas[i], i))
    return best == b_index


def build_forest(masks: Sequence[MaskRecord], cover_percent: float = 90.0) -> HierarchyForest:
    """Assign each mask its covering parent and its hierarchy level."""
    if not masks:
        return HierarchyForest([], [], cover_percent)
    dense = np.stack([m.bitmap().ravel() for m in masks]).astype(np.int64)
    areas = dense.sum(axis=1)
    inter = dense @ dense.T
    frac = cover_percent / 100.0

    parent: list[int | None] = []
    for a in range(len(masks)):
        passing = _coverage_candidates(areas, inter, a, frac)
        parent.append(min(passing, key=lambda b: (areas[b], b)) if passing else None)

    forest = HierarchyForest(parent, [HierLevel.WHOLE] * len(masks), cover_percent)
    forest.level = [_level_for_depth(forest.depth(i)) for i in range(len(masks))]
    return forest


def level_distribution(forest: HierarchyForest) -> dict[HierLevel, int]:
    """Exact node counts per level; all zeros for an empty forest."""
    counts = {level: 0 for level in HierLevel}
    for level in forest.level:
        counts[level] += 1
    return counts
