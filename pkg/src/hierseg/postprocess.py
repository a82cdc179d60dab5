"""Mask refinement, quality filters, and threshold ensembling.

Per-threshold masks run through hole filling, optional color-edge
refinement (see :mod:`hierseg.crf`), and the quality filters before the
per-threshold lists are combined with near-duplicate suppression.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .crf import CrfParams, mean_field_refine
from .errors import DimensionMismatchError
from .features import RgbImage
from .rle import RleMask, mask_iou

__all__ = [
    "CrfParams",
    "MaskRecord",
    "fill_holes",
    "crf_refine",
    "filter_masks",
    "ensemble",
]

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class MaskRecord:
    """A candidate object mask with provenance.

    ``pre_crf_iou`` is the IoU between the mask before and after
    refinement; it stays 1.0 when refinement is disabled.
    """

    image_id: str
    rle: RleMask
    source_threshold: float
    area_px: int
    bbox: tuple[int, int, int, int]
    pre_crf_iou: float = 1.0

    def __post_init__(self) -> None:
        if self.area_px < 1:
            raise ValueError("mask records must have at least one foreground pixel")
        if self.area_px != self.rle.area:
            raise DimensionMismatchError(
                f"area_px {self.area_px} != RLE foreground {self.rle.area}"
            )

    @classmethod
    def from_bitmap(
        cls,
        image_id: str,
        bitmap: np.ndarray,
        source_threshold: float,
        pre_crf_iou: float = 1.0,
    ) -> "MaskRecord":
        rle = RleMask.from_dense(bitmap)
        return cls(image_id, rle, source_threshold, rle.area, rle.bbox(), pre_crf_iou)

    def bitmap(self) -> np.ndarray:
        return self.rle.to_dense()


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background components not 4-connected to the image border.

    Foreground never shrinks; applying the operation twice equals applying
    it once.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("fill_holes requires a nonempty mask")
    labels, _ = ndimage.label(~mask, structure=_CROSS)
    border = np.unique(
        np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    )
    border = border[border != 0]
    holes = (labels != 0) & ~np.isin(labels, border)
    return mask | holes


def crf_refine(mask: np.ndarray, img: RgbImage, params: CrfParams) -> np.ndarray:
    """Color-guided mean-field refinement of one mask against ``img``."""
    if mask.shape != (img.height, img.width):
        raise DimensionMismatchError(
            f"mask shape {mask.shape} != image {img.height}x{img.width}"
        )
    return mean_field_refine(mask, img.pixels, params)


def _corner_count(record: MaskRecord) -> int:
    dense = record.bitmap()
    return int(dense[0, 0]) + int(dense[0, -1]) + int(dense[-1, 0]) + int(dense[-1, -1])


def filter_masks(
    records: Sequence[MaskRecord],
    img_w: int,
    img_h: int,
    *,
    min_area_px: int = 100,
    max_corner_count: int = 2,
    min_crf_iou: float = 0.5,
) -> list[MaskRecord]:
    """Drop low-quality masks.

    A record is removed when its refinement IoU is below ``min_crf_iou``,
    its area is below ``min_area_px``, or its mask contains more than
    ``max_corner_count`` of the four image corner pixels (likely
    background). Boundary cases keep: area == min_area_px, IoU ==
    min_crf_iou, and corner count == max_corner_count all survive.
    """
    kept = []
    for record in records:
        if (record.rle.width, record.rle.height) != (img_w, img_h):
            raise DimensionMismatchError(
                f"record {record.image_id} is {record.rle.width}x{record.rle.height}, "
                f"expected {img_w}x{img_h}"
            )
        if record.pre_crf_iou < min_crf_iou:
            continue
        if record.area_px < min_area_px:
            continue
        if _corner_count(record) > max_corner_count:
            continue
        kept.append(record)
    return kept


def ensemble(
    per_threshold: Iterable[Sequence[MaskRecord]], dedup_iou: float = 0.95
) -> list[MaskRecord]:
    """Combine per-threshold mask lists, suppressing near-duplicates.

    When two masks overlap with IoU >= ``dedup_iou``, the one from the
    higher source threshold wins; equal thresholds fall back to the larger
    area. Survivors are pairwise below the cutoff.
    """
    flat: list[MaskRecord] = [r for group in per_threshold for r in group]
    if not flat:
        return []
    image_ids = {r.image_id for r in flat}
    if len(image_ids) > 1:
        raise ValueError(f"ensemble mixes records from images {sorted(image_ids)}")
    order = sorted(
        range(len(flat)),
        key=lambda i: (-flat[i].source_threshold, -flat[i].area_px, i),
    )
    kept: list[MaskRecord] = []
    for i in order:
        candidate = flat[i]
        if all(mask_iou(candidate.rle, k.rle) < dedup_iou for k in kept):
            kept.append(candidate)
    return kept
