"""Class-agnostic detection and segmentation metrics.

All ground truths and predictions are treated as a single category; only
localization quality is scored. Matching is greedy in detection-score
order: each detection takes the unmatched ground truth with the highest
IoU at or above the threshold (ties keep the earliest). Recall is the
dataset-level ratio of matched ground truths; average precision uses the
standard 101-point interpolated precision/recall integral. Size buckets
follow the common convention (small < 32^2 <= medium < 96^2 <= large,
half-open). Buckets restrict metrics through ignore flags: out-of-bucket
ground truths do not count toward recall, and detections matched to them
(or unmatched detections outside the bucket) are scored as neither true
nor false positives. Metrics over zero countable ground truths are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hierarchy import HierLevel
from .rle import RleMask, mask_iou

IOU_THRESHOLDS: tuple[float, ...] = tuple((50 + 5 * i) / 100 for i in range(10))
RECALL_LEVELS: tuple[float, ...] = tuple(i / 100 for i in range(101))
MAX_DETS_DEFAULT: tuple[int, ...] = (10, 100, 1000)

SMALL_MAX = 32**2
MEDIUM_MAX = 96**2
_AREA_RANGES = {
    "all": (0.0, float("inf")),
    "small": (0.0, float(SMALL_MAX)),
    "medium": (float(SMALL_MAX), float(MEDIUM_MAX)),
    "large": (float(MEDIUM_MAX), float("inf")),
}


@dataclass
class Detection:
    image_id: int | str
    box: tuple[float, float, float, float]
    score: float
    mask: RleMask | None = None
    level: HierLevel | None = None

    def area(self) -> float:
        if self.mask is not None:
            return float(self.mask.area)
        return float(self.box[2] * self.box[3])


@dataclass
class GroundTruth:
    image_id: int | str
    box: tuple[float, float, float, float]
    mask: RleMask | None = None
    area: float | None = None
    ignore: bool = False

    def effective_area(self) -> float:
        if self.area is not None:
            return float(self.area)
        if self.mask is not None:
            return float(self.mask.area)
        return float(self.box[2] * self.box[3])


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of two (x, y, w, h) boxes; 0 when the union is empty."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def size_bucket(gt: GroundTruth) -> str:
    """"S", "M", or "L" by mask area when present, else box area."""
    area = gt.effective_area()
    if area < SMALL_MAX:
        return "S"
    if area < MEDIUM_MAX:
        return "M"
    return "L"


def _pair_iou(det: Detection, gt: GroundTruth, use_mask: bool) -> float:
    if use_mask:
        if det.mask is None or gt.mask is None:
            raise ValueError("mask IoU requested but a mask is missing")
        if det.mask.area == 0 or gt.mask.area == 0:
            return 0.0
        return mask_iou(det.mask, gt.mask)
    return box_iou(det.box, gt.box)


@dataclass
class _ImageEval:
    """Per-image matching outcome for one (area range, detection cap)."""

    scores: np.ndarray  # (D,) detection scores, already capped and sorted
    matched: np.ndarray  # (T, D) detection matched some ground truth
    det_ignored: np.ndarray  # (T, D)
    n_countable_gt: int


def _evaluate_image(
    dets: list[Detection],
    gts: list[GroundTruth],
    iou: np.ndarray,
    iou_thrs: Sequence[float],
    area_rng: tuple[float, float],
    max_det: int,
) -> _ImageEval:
    lo, hi = area_rng
    gt_ignored = np.array(
        [g.ignore or not (lo <= g.effective_area() < hi) for g in gts], dtype=bool
    )
    gt_order = sorted(range(len(gts)), key=lambda i: (gt_ignored[i], i))
    gt_ig = gt_ignored[gt_order]
    det_order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))[:max_det]
    ious = iou[np.ix_(det_order, gt_order)] if dets and gts else np.zeros((len(det_order), 0))

    n_thr, n_det, n_gt = len(iou_thrs), len(det_order), len(gt_order)
    matched = np.zeros((n_thr, n_det), dtype=bool)
    det_ig = np.zeros((n_thr, n_det), dtype=bool)
    gt_taken = np.zeros((n_thr, n_gt), dtype=bool)
    for ti, thr in enumerate(iou_thrs):
        for di in range(n_det):
            best, best_iou = -1, -1.0
            for gi in range(n_gt):
                if gt_taken[ti, gi]:
                    continue
                # gts are sorted countable-first: once a countable match is
                # held, the ignored tail cannot improve it
                if best >= 0 and not gt_ig[best] and gt_ig[gi]:
                    break
                v = ious[di, gi]
                if v < thr or v <= best_iou:
                    continue
                best, best_iou = gi, v
            if best >= 0:
                matched[ti, di] = True
                gt_taken[ti, best] = True
                det_ig[ti, di] = gt_ig[best]

    det_out_of_range = np.array(
        [not (lo <= dets[i].area() < hi) for i in det_order], dtype=bool
    )
    det_ig |= ~matched & det_out_of_range[np.newaxis, :]
    return _ImageEval(
        scores=np.array([dets[i].score for i in det_order], dtype=np.float64),
        matched=matched,
        det_ignored=det_ig,
        n_countable_gt=int((~gt_ignored).sum()),
    )


def _accumulate(per_image: list[_ImageEval], n_thr: int) -> tuple[np.ndarray, np.ndarray]:
    """(recall per threshold, AP per threshold) over pooled detections."""
    npig = sum(ev.n_countable_gt for ev in per_image)
    if npig == 0:
        return np.full(n_thr, np.nan), np.full(n_thr, np.nan)
    scores = np.concatenate([ev.scores for ev in per_image])
    matched = np.concatenate([ev.matched for ev in per_image], axis=1)
    ignored = np.concatenate([ev.det_ignored for ev in per_image], axis=1)
    order = np.argsort(-scores, kind="mergesort")
    matched = matched[:, order]
    ignored = ignored[:, order]

    tp = np.cumsum(matched & ~ignored, axis=1, dtype=np.float64)
    fp = np.cumsum(~matched & ~ignored, axis=1, dtype=np.float64)
    recalls = tp[:, -1] / npig if tp.shape[1] else np.zeros(n_thr)

    rec_levels = np.asarray(RECALL_LEVELS)
    ap = np.zeros(n_thr)
    for ti in range(n_thr):
        rc = tp[ti] / npig
        pr = tp[ti] / np.maximum(tp[ti] + fp[ti], np.finfo(np.float64).eps)
        # precision envelope: best precision at any recall >= r
        for k in range(len(pr) - 1, 0, -1):
            pr[k - 1] = max(pr[k - 1], pr[k])
        idx = np.searchsorted(rc, rec_levels, side="left")
        q = np.zeros(len(rec_levels))
        valid = idx < len(pr)
        q[valid] = pr[idx[valid]]
        ap[ti] = q.mean()
    return recalls, ap


def _group_by_image(items):
    groups: dict = {}
    for item in items:
        groups.setdefault(item.image_id, []).append(item)
    return groups


def _image_evals(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    use_mask: bool,
    iou_thrs: Sequence[float],
    area_rng: tuple[float, float],
    max_det: int,
    iou_cache: dict,
) -> list[_ImageEval]:
    det_groups = _group_by_image(dets)
    gt_groups = _group_by_image(gts)
    out = []
    for image_id in sorted(gt_groups.keys() | det_groups.keys(), key=str):
        img_dets = det_groups.get(image_id, [])
        img_gts = gt_groups.get(image_id, [])
        if not img_dets and not img_gts:
            continue
        key = (image_id, use_mask)
        if key not in iou_cache:
            iou_cache[key] = np.array(
                [[_pair_iou(d, g, use_mask) for g in img_gts] for d in img_dets],
                dtype=np.float64,
            ).reshape(len(img_dets), len(img_gts))
        out.append(
            _evaluate_image(img_dets, img_gts, iou_cache[key], iou_thrs, area_rng, max_det)
        )
    return out


def match_and_recall(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thrs: Sequence[float] = IOU_THRESHOLDS,
    max_dets: int = 1000,
    use_mask: bool = False,
) -> np.ndarray:
    """Recall per IoU threshold; the mean over thresholds is AR.

    Images with zero countable ground truths contribute nothing to the
    denominator; with no countable ground truths at all the result is NaN.
    """
    per_image = _image_evals(
        dets, gts, use_mask, iou_thrs, _AREA_RANGES["all"], max_dets, {}
    )
    recalls, _ = _accumulate(per_image, len(iou_thrs))
    return recalls


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thr: float,
    max_dets: int = 1000,
    use_mask: bool = False,
) -> float:
    """101-point interpolated AP at one IoU threshold."""
    per_image = _image_evals(
        dets, gts, use_mask, [iou_thr], _AREA_RANGES["all"], max_dets, {}
    )
    _, ap = _accumulate(per_image, 1)
    return float(ap[0])


@dataclass
class MetricSet:
    """AR/AP numbers for one IoU kind (box or mask)."""

    ar_by_k: dict[int, float]
    ar_small: float
    ar_medium: float
    ar_large: float
    ap: float
    ap_50: float
    ap_75: float
    ap_small: float
    ap_medium: float
    ap_large: float

    @property
    def ar_10(self) -> float:
        return self.ar_by_k.get(10, float("nan"))

    @property
    def ar_100(self) -> float:
        return self.ar_by_k.get(100, float("nan"))

    @property
    def ar_1000(self) -> float:
        return self.ar_by_k.get(1000, float("nan"))

    def to_dict(self) -> dict[str, float]:
        out = {f"AR@{k}": v for k, v in sorted(self.ar_by_k.items())}
        out.update(
            {
                "AR_S": self.ar_small,
                "AR_M": self.ar_medium,
                "AR_L": self.ar_large,
                "AP": self.ap,
                "AP_50": self.ap_50,
                "AP_75": self.ap_75,
                "AP_S": self.ap_small,
                "AP_M": self.ap_medium,
                "AP_L": self.ap_large,
            }
        )
        return out


@dataclass
class EvalResult:
    box: MetricSet
    mask: MetricSet | None = None

    def to_dict(self) -> dict[str, dict[str, float]]:
        out = {"box": self.box.to_dict()}
        if self.mask is not None:
            out["mask"] = self.mask.to_dict()
        return out


def _metric_set(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    use_mask: bool,
    iou_thrs: Sequence[float],
    max_dets: Sequence[int],
) -> MetricSet:
    cap = max(max_dets)
    iou_cache: dict = {}

    def run(area: str, k: int) -> tuple[np.ndarray, np.ndarray]:
        per_image = _image_evals(
            dets, gts, use_mask, iou_thrs, _AREA_RANGES[area], k, iou_cache
        )
        return _accumulate(per_image, len(iou_thrs))

    ar_by_k = {k: float(np.mean(run("all", k)[0])) for k in sorted(max_dets)}
    recalls_all, ap_all = run("all", cap)
    thr_list = list(iou_thrs)
    ap_50 = float(ap_all[thr_list.index(0.5)]) if 0.5 in thr_list else float("nan")
    ap_75 = float(ap_all[thr_list.index(0.75)]) if 0.75 in thr_list else float("nan")
    sizes = {}
    for name in ("small", "medium", "large"):
        r, a = run(name, cap)
        sizes[name] = (float(np.mean(r)), float(np.mean(a)))
    return MetricSet(
        ar_by_k=ar_by_k,
        ar_small=sizes["small"][0],
        ar_medium=sizes["medium"][0],
        ar_large=sizes["large"][0],
        ap=float(np.mean(ap_all)),
        ap_50=ap_50,
        ap_75=ap_75,
        ap_small=sizes["small"][1],
        ap_medium=sizes["medium"][1],
        ap_large=sizes["large"][1],
    )


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thrs: Sequence[float] = IOU_THRESHOLDS,
    max_dets: Sequence[int] = MAX_DETS_DEFAULT,
) -> EvalResult:
    """Full box (and, when masks are present on both sides, mask) metrics."""
    box_metrics = _metric_set(dets, gts, False, iou_thrs, max_dets)
    mask_metrics = None
    if (
        dets
        and gts
        and all(d.mask is not None for d in dets)
        and all(g.mask is not None for g in gts)
    ):
        mask_metrics = _metric_set(dets, gts, True, iou_thrs, max_dets)
    return EvalResult(box=box_metrics, mask=mask_metrics)
