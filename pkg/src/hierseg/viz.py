"""Overlay rendering of annotation masks onto their source images."""

from __future__ import annotations

import colorsys
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .detjson import load_json_file, rle_from_segmentation
from .errors import ParseError
from .hierarchy import HierLevel
from .pipeline import IMAGE_SUFFIXES

logger = logging.getLogger(__name__)

_GOLDEN = 0.6180339887498949  # hue stride; spreads colors for consecutive ids
_LEVEL_SATURATION = {HierLevel.WHOLE: 0.95, HierLevel.PART: 0.75, HierLevel.SUBPART: 0.55}


def annotation_color(ann_id: int, level: HierLevel) -> tuple[int, int, int]:
    """Deterministic RGB color: hue from the annotation id, tone from the level."""
    hue = (ann_id * _GOLDEN) % 1.0
    sat = _LEVEL_SATURATION.get(level, 0.8)
    r, g, b = colorsys.hsv_to_rgb(hue, sat, 1.0)
    return int(r * 255), int(g * 255), int(b * 255)


def _find_image(image_dir: Path, file_name: str) -> Path | None:
    direct = image_dir / file_name
    if direct.exists():
        return direct
    for suffix in IMAGE_SUFFIXES:
        candidate = image_dir / f"{file_name}{suffix}"
        if candidate.exists():
            return candidate
    return None


def render_overlays(
    annotations_path: str | Path,
    image_dir: str | Path,
    out_dir: str | Path,
    level_filter: HierLevel | None = None,
    alpha: float = 0.5,
) -> list[Path]:
    """Write one overlay PNG per annotated image; returns written paths.

    Masks are tinted with level-dependent colors keyed on annotation id;
    missing images are logged and skipped.
    """
    data = load_json_file(annotations_path)
    if not isinstance(data, dict) or "images" not in data:
        raise ParseError(f"{annotations_path}: expected an annotations object")
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    by_image: dict = {im["id"]: [] for im in data["images"]}
    for ann in data.get("annotations", []):
        by_image.setdefault(ann["image_id"], []).append(ann)

    written = []
    for im in data["images"]:
        file_name = im.get("file_name", str(im["id"]))
        path = _find_image(image_dir, file_name)
        if path is None:
            logger.error("missing image for %r in %s", file_name, image_dir)
            continue
        with Image.open(path) as handle:
            pixels = np.asarray(handle.convert("RGB"), dtype=np.float64)
        for ann in sorted(by_image.get(im["id"], []), key=lambda a: a["id"]):
            level = HierLevel(ann["category_id"])
            if level_filter is not None and level != level_filter:
                continue
            mask = rle_from_segmentation(
                ann["segmentation"], annotations_path, f"annotation {ann['id']}"
            ).to_dense()
            if mask.shape != pixels.shape[:2]:
                logger.error("annotation %s mask shape %s mismatches image %s",
                             ann["id"], mask.shape, pixels.shape[:2])
                continue
            color = np.array(annotation_color(ann["id"], level), dtype=np.float64)
            pixels[mask] = (1 - alpha) * pixels[mask] + alpha * color
        out_path = out_dir / (Path(file_name).stem + "_overlay.png")
        Image.fromarray(pixels.round().astype(np.uint8)).save(out_path)
        written.append(out_path)
    return written
