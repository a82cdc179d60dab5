"""Reading and writing detection-style annotation and result files.

Ground-truth files carry ``images`` (id, width, height), ``annotations``
(id, image_id, bbox, area, segmentation) and optional ``categories``;
result files are a flat list of {image_id, bbox, score, segmentation}.
Segmentation ``counts`` may be the uncompressed integer list or the
compressed ASCII string; sizes are [height, width]. A ground-truth-shaped
file is also accepted where results are expected, with every annotation
treated as a score-1.0 detection.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ParseError
from .evaluation import Detection, GroundTruth
from .hierarchy import HierLevel
from .rle import RleMask, decode_counts, encode_counts

CATEGORIES = [
    {"id": int(HierLevel.WHOLE), "name": "whole"},
    {"id": int(HierLevel.PART), "name": "part"},
    {"id": int(HierLevel.SUBPART), "name": "subpart"},
]


def load_json_file(path: str | Path):
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def rle_from_segmentation(seg, path, context: str) -> RleMask:
    try:
        h, w = seg["size"]
        counts = seg["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {context}: malformed segmentation: {exc}") from exc
    if isinstance(counts, str):
        runs = decode_counts(counts)
    else:
        runs = tuple(int(c) for c in counts)
    return RleMask(width=int(w), height=int(h), runs=runs)


def _clamp_box(box, width: int | None, height: int | None):
    x, y, w, h = (float(v) for v in box)
    if width is None or height is None:
        return (x, y, w, h)
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, x0), float(width))
    y1 = min(max(y + h, y0), float(height))
    return (x0, y0, x1 - x0, y1 - y0)


def load_ground_truth(path: str | Path):
    """Returns (image dims by id, list of GroundTruth)."""
    data = load_json_file(path)
    if not isinstance(data, dict) or "annotations" not in data:
        raise ParseError(f"{path}: expected an object with an 'annotations' list")
    images: dict = {}
    for im in data.get("images", []):
        images[im["id"]] = (int(im["width"]), int(im["height"]))
    gts = []
    for i, ann in enumerate(data["annotations"]):
        try:
            image_id = ann["image_id"]
            bbox = ann["bbox"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: annotations[{i}]: missing field: {exc}") from exc
        width, height = images.get(image_id, (None, None))
        mask = None
        if ann.get("segmentation"):
            mask = rle_from_segmentation(ann["segmentation"], path, f"annotations[{i}]")
        gts.append(
            GroundTruth(
                image_id=image_id,
                box=_clamp_box(bbox, width, height),
                mask=mask,
                area=float(ann["area"]) if "area" in ann else None,
                ignore=bool(ann.get("iscrowd", 0)),
            )
        )
    return images, gts


def load_results(path: str | Path, images: dict | None = None) -> list[Detection]:
    """Load detections; unknown image ids are rejected when ``images`` given."""
    data = load_json_file(path)
    if isinstance(data, dict) and "annotations" in data:
        rows = [dict(ann, score=ann.get("score", 1.0)) for ann in data["annotations"]]
    elif isinstance(data, list):
        rows = data
    else:
        raise ParseError(f"{path}: expected a result list or an annotations object")
    dets = []
    for i, row in enumerate(rows):
        try:
            image_id = row["image_id"]
            bbox = row["bbox"]
            score = float(row["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: results[{i}]: {exc}") from exc
        if images is not None and image_id not in images:
            raise ParseError(f"{path}: results[{i}]: unknown image_id {image_id!r}")
        width, height = (images or {}).get(image_id, (None, None))
        mask = None
        if row.get("segmentation"):
            mask = rle_from_segmentation(row["segmentation"], path, f"results[{i}]")
        level = None
        cat = row.get("category_id")
        if cat in (1, 2, 3):
            level = HierLevel(cat)
        dets.append(
            Detection(
                image_id=image_id,
                box=_clamp_box(bbox, width, height),
                score=score,
                mask=mask,
                level=level,
            )
        )
    return dets


def segmentation_dict(mask: RleMask) -> dict:
    """Compressed segmentation entry for an annotation record."""
    return {"size": [mask.height, mask.width], "counts": encode_counts(mask.runs)}


def write_annotations(path: str | Path, images: list[dict], annotations: list[dict]) -> None:
    """Write a ground-truth-style annotation file (deterministic bytes)."""
    payload = {"images": images, "annotations": annotations, "categories": CATEGORIES}
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
