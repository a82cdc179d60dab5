from __future__ import annotations

import numpy as np
import pytest

from hierseg.features import FeatureMap
from hierseg.postprocess import MaskRecord
from hierseg.rle import RleMask


def make_feature_map(
    data: np.ndarray, patch_size: int = 8, image_id: str = "test"
) -> FeatureMap:
    data = np.asarray(data, dtype=np.float32)
    h, w, d = data.shape
    return FeatureMap(h, w, d, patch_size, data, image_id)


def rect_mask(height: int, width: int, y0: int, y1: int, x0: int, x1: int) -> np.ndarray:
    """Rectangle [y0, y1) x [x0, x1) on an otherwise empty canvas."""
    mask = np.zeros((height, width), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def record_from(mask: np.ndarray, threshold: float = 0.4, image_id: str = "img",
                pre_crf_iou: float = 1.0) -> MaskRecord:
    return MaskRecord.from_bitmap(image_id, mask, threshold, pre_crf_iou)


def random_rect_mask(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    y0 = int(rng.integers(0, height - 1))
    y1 = int(rng.integers(y0 + 1, height + 1))
    x0 = int(rng.integers(0, width - 1))
    x1 = int(rng.integers(x0 + 1, width + 1))
    return rect_mask(height, width, y0, y1, x0, x1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def dense_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Oracle IoU straight from boolean bitmaps."""
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union)


def rle_of(mask: np.ndarray) -> RleMask:
    return RleMask.from_dense(mask)
