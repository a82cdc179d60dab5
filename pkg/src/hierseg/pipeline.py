"""End-to-end pseudo-label generation over a directory of feature maps.

Per image: cluster the patch grid, rasterize each threshold's regions,
fill holes, optionally refine against the RGB image, filter, ensemble
across thresholds, and split the survivors into hierarchy levels. Images
are independent, so they can be processed by a pool of workers; outputs
are sorted by image key before ids are assigned, which makes the
annotation file byte-identical regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import ClusterConfig, cluster, region_to_mask
from .crf import CrfParams
from .detjson import segmentation_dict, write_annotations
from .errors import ConfigError
from .features import FeatureMap, RgbImage, load_feature_map, load_numpy_feature_map, load_rgb_image
from .hierarchy import HierLevel, build_forest
from .postprocess import MaskRecord, crf_refine, ensemble, fill_holes, filter_masks
from .rle import RleMask, mask_iou

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class PipelineConfig:
    thresholds: tuple[float, ...] = (0.4, 0.2, 0.1)
    cover_percent: float = 90.0
    crf_enabled: bool = False
    crf: CrfParams = field(default_factory=CrfParams)
    min_area_px: int = 100
    max_corner_count: int = 2
    dedup_iou: float = 0.95
    worker_count: int = 1
    connectivity: int = 4
    npy_patch_size: int = 8

    def __post_init__(self) -> None:
        ClusterConfig(self.thresholds, self.connectivity)  # reuse its validation
        if not 0.0 < self.cover_percent < 100.0:
            raise ConfigError(f"cover_percent must lie in (0, 100), got {self.cover_percent}")
        if self.min_area_px < 1:
            raise ConfigError(f"min_area_px must be >= 1, got {self.min_area_px}")
        if not 0 <= self.max_corner_count <= 4:
            raise ConfigError(f"max_corner_count must lie in [0, 4], got {self.max_corner_count}")
        if not 0.0 < self.dedup_iou <= 1.0:
            raise ConfigError(f"dedup_iou must lie in (0, 1], got {self.dedup_iou}")
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.npy_patch_size < 1:
            raise ConfigError(f"npy_patch_size must be >= 1, got {self.npy_patch_size}")

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(self.thresholds, self.connectivity)


_CONFIG_PARSERS = {
    "thresholds": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "cover_percent": float,
    "crf_enabled": lambda s: _parse_bool(s),
    "crf_iterations": int,
    "crf_sigma_spatial": float,
    "crf_weight_spatial": float,
    "crf_sigma_bilateral_xy": float,
    "crf_sigma_bilateral_rgb": float,
    "crf_weight_bilateral": float,
    "crf_unary_confidence": float,
    "min_area_px": int,
    "max_corner_count": int,
    "dedup_iou": float,
    "worker_count": int,
    "connectivity": int,
    "npy_patch_size": int,
}

_CRF_KEY_MAP = {
    "crf_iterations": "iterations",
    "crf_sigma_spatial": "sigma_spatial",
    "crf_weight_spatial": "weight_spatial",
    "crf_sigma_bilateral_xy": "sigma_bilateral_xy",
    "crf_sigma_bilateral_rgb": "sigma_bilateral_rgb",
    "crf_weight_bilateral": "weight_bilateral",
    "crf_unary_confidence": "unary_confidence",
}


def _parse_bool(s: str) -> bool:
    lowered = s.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse a flat ``key = value`` config file; unknown keys are errors."""
    base = base or PipelineConfig()
    updates: dict = {}
    crf_updates: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            parsed = _CONFIG_PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
        if key in _CRF_KEY_MAP:
            crf_updates[_CRF_KEY_MAP[key]] = parsed
        else:
            updates[key] = parsed
    if crf_updates:
        updates["crf"] = dataclasses.replace(base.crf, **crf_updates)
    return dataclasses.replace(base, **updates)


@dataclass
class ImageResult:
    """Serializable per-image pipeline output."""

    image_id: str
    width: int
    height: int
    masks: list[MaskRecord]
    levels: list[HierLevel]
    per_threshold_counts: dict[float, int]


def discover_feature_files(feature_dir: str | Path) -> list[Path]:
    feature_dir = Path(feature_dir)
    files = sorted(feature_dir.glob("*.fmap")) + sorted(feature_dir.glob("*.npy"))
    return files


def find_image_file(image_dir: Path, image_id: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = image_dir / f"{image_id}{suffix}"
        if candidate.exists():
            return candidate
    return None


def _load_any_feature_map(path: Path, cfg: PipelineConfig) -> FeatureMap:
    if path.suffix == ".npy":
        return load_numpy_feature_map(path, patch_size=cfg.npy_patch_size)
    return load_feature_map(path)


def process_feature_map(
    fm: FeatureMap, image: RgbImage | None, cfg: PipelineConfig
) -> ImageResult:
    """Run the full per-image pipeline on one feature map."""
    snapshots = cluster(fm, cfg.cluster_config())
    per_threshold: list[list[MaskRecord]] = []
    counts: dict[float, int] = {}
    use_crf = cfg.crf_enabled and image is not None
    if cfg.crf_enabled and image is None:
        logger.warning("%s: refinement enabled but no RGB image found; skipping it", fm.image_id)
    if use_crf and not image.matches(fm):
        raise ConfigError(
            f"{fm.image_id}: image {image.width}x{image.height} does not tile the "
            f"{fm.grid_w * fm.patch_size}x{fm.grid_h * fm.patch_size} patch grid"
        )
    for snap in snapshots:
        records = []
        for region in snap.regions:
            bitmap = fill_holes(
                region_to_mask(region, fm.patch_size, fm.grid_h, fm.grid_w)
            )
            pre_crf_iou = 1.0
            if use_crf:
                refined = crf_refine(bitmap, image, cfg.crf)
                if refined.any():
                    pre_crf_iou = mask_iou(RleMask.from_dense(bitmap), RleMask.from_dense(refined))
                    bitmap = refined
                else:
                    pre_crf_iou = 0.0  # refinement erased the mask; filters drop it
            if bitmap.any():
                records.append(
                    MaskRecord.from_bitmap(fm.image_id, bitmap, snap.threshold, pre_crf_iou)
                )
        kept = filter_masks(
            records,
            fm.image_width,
            fm.image_height,
            min_area_px=cfg.min_area_px,
            max_corner_count=cfg.max_corner_count,
        )
        counts[snap.threshold] = len(kept)
        per_threshold.append(kept)

    combined = ensemble(per_threshold, cfg.dedup_iou)
    forest = build_forest(combined, cfg.cover_percent)
    return ImageResult(
        image_id=fm.image_id,
        width=fm.image_width,
        height=fm.image_height,
        masks=combined,
        levels=list(forest.level),
        per_threshold_counts=counts,
    )


def _process_file(args: tuple[str, str | None, PipelineConfig]) -> tuple[str, ImageResult]:
    feature_path, image_path, cfg = args
    fm = _load_any_feature_map(Path(feature_path), cfg)
    image = load_rgb_image(image_path, fm.image_id) if image_path else None
    return Path(feature_path).name, process_feature_map(fm, image, cfg)


@dataclass
class GenerateReport:
    results: list[ImageResult]
    failures: list[tuple[str, str]]
    stats_rows: list[dict]

    @property
    def exit_code(self) -> int:
        if not self.results:
            return 1
        return 2 if self.failures else 0


def generate(
    feature_dir: str | Path,
    out_path: str | Path,
    cfg: PipelineConfig | None = None,
    image_dir: str | Path | None = None,
) -> GenerateReport:
    """Process every feature file in ``feature_dir`` and write annotations.

    Per-image failures are logged and skipped; the report's exit code is 0
    when everything succeeded, 2 when some images were skipped, and 1 when
    nothing could be processed.
    """
    cfg = cfg or PipelineConfig()
    files = discover_feature_files(feature_dir)
    if not files:
        raise ConfigError(f"no .fmap or .npy files in {feature_dir}")
    jobs = []
    for path in files:
        image_path = None
        if image_dir is not None:
            found = find_image_file(Path(image_dir), path.stem)
            image_path = str(found) if found else None
        jobs.append((str(path), image_path, cfg))

    outputs: dict[str, ImageResult] = {}
    failures: list[tuple[str, str]] = []
    if cfg.worker_count == 1:
        for job in jobs:
            try:
                name, result = _process_file(job)
                outputs[name] = result
            except Exception as exc:
                logger.error("skipping %s: %s", job[0], exc)
                failures.append((job[0], str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=cfg.worker_count) as pool:
            futures = {pool.submit(_process_file, job): job for job in jobs}
            for future, job in futures.items():
                try:
                    name, result = future.result()
                    outputs[name] = result
                except Exception as exc:
                    logger.error("skipping %s: %s", job[0], exc)
                    failures.append((job[0], str(exc)))

    ordered = [outputs[name] for name in sorted(outputs)]
    images_json = []
    annotations_json = []
    stats_rows = []
    ann_id = 1
    for img_num, result in enumerate(ordered, start=1):
        images_json.append(
            {
                "id": img_num,
                "file_name": result.image_id,
                "width": result.width,
                "height": result.height,
            }
        )
        dist = {level: 0 for level in HierLevel}
        for record, level in zip(result.masks, result.levels):
            dist[level] += 1
            annotations_json.append(
                {
                    "id": ann_id,
                    "image_id": img_num,
                    "category_id": int(level),
                    "bbox": [int(v) for v in record.bbox],
                    "area": int(record.area_px),
                    "segmentation": segmentation_dict(record.rle),
                    "source_threshold": record.source_threshold,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
        row = {"image_id": result.image_id, "n_masks": len(result.masks)}
        for thr in cfg.thresholds:
            row[f"n_at_{thr:g}"] = result.per_threshold_counts.get(thr, 0)
        for level in HierLevel:
            row[f"n_{level.name.lower()}"] = dist[level]
        stats_rows.append(row)

    if ordered:
        write_annotations(out_path, images_json, annotations_json)
    return GenerateReport(results=ordered, failures=failures, stats_rows=stats_rows)


def forest_level_counts(results: list[ImageResult]) -> dict[HierLevel, int]:
    """Aggregate level distribution across images (see hierarchy module)."""
    totals = {level: 0 for level in HierLevel}
    for result in results:
        for level in result.levels:
            totals[level] += 1
    return totals
