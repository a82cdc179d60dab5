"""Batch extraction of patch features from an image directory."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ImageDecodeError, ModelLoadError
from .fmap import write_fmap
from .model import arch_spec, build_model

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

# channel statistics the self-supervised backbones were trained with
MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass(frozen=True)
class ExtractorConfig:
    arch: str = "vit-b-8"
    resolution: int = 480
    out_dir: str = "features"
    batch_size: int = 4
    device: str = "cpu"
    weights: str | None = None
    seed: int = 0
    out_format: str = "fmap"  # "fmap" or "npy"

    def __post_init__(self) -> None:
        spec = arch_spec(self.arch)
        if self.resolution % spec.patch_size:
            raise ModelLoadError(
                f"resolution {self.resolution} not divisible by patch size {spec.patch_size}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.out_format not in ("fmap", "npy"):
            raise ValueError(f"out_format must be 'fmap' or 'npy', got {self.out_format!r}")


def preprocess_image(path: str | Path, resolution: int) -> torch.Tensor:
    """Decode, square-resize (bilinear, no aspect preservation), normalize."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((resolution, resolution), Image.BILINEAR)
            pixels = np.asarray(im, dtype=np.float32) / 255.0
    except Exception as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc
    pixels = (pixels - MEAN) / STD
    return torch.from_numpy(pixels.transpose(2, 0, 1))


def list_images(images_dir: str | Path) -> list[Path]:
    images_dir = Path(images_dir)
    return sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class ExtractReport:
    written: list[Path] = field(default_factory=list)
    skipped: list[tuple[Path, str]] = field(default_factory=list)


def extract_features(
    model: torch.nn.Module, batch: torch.Tensor, device: str = "cpu"
) -> np.ndarray:
    """(B, 3, H, W) -> (B, H/p, W/p, D) float32 features."""
    with torch.inference_mode():
        feats = model(batch.to(device))
    return feats.cpu().numpy().astype(np.float32)


def run_extraction(images_dir: str | Path, cfg: ExtractorConfig) -> ExtractReport:
    """Extract features for every image in ``images_dir``.

    One output file per image, named by the image stem. Undecodable
    images are logged and skipped.
    """
    model = build_model(cfg.arch, cfg.weights, cfg.seed).to(cfg.device)
    spec = arch_spec(cfg.arch)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExtractReport()

    paths = list_images(images_dir)
    if not paths:
        logger.warning("no images found in %s", images_dir)
    pending: list[tuple[Path, torch.Tensor]] = []

    def flush() -> None:
        if not pending:
            return
        batch = torch.stack([tensor for _, tensor in pending])
        feats = extract_features(model, batch, cfg.device)
        for (path, _), grid in zip(pending, feats):
            if cfg.out_format == "npy":
                out_path = out_dir / f"{path.stem}.npy"
                np.save(out_path, grid)
            else:
                out_path = out_dir / f"{path.stem}.fmap"
                write_fmap(out_path, grid, spec.patch_size, path.stem)
            report.written.append(out_path)
        pending.clear()

    for path in paths:
        try:
            pending.append((path, preprocess_image(path, cfg.resolution)))
        except ImageDecodeError as exc:
            logger.error("skipping %s: %s", path, exc)
            report.skipped.append((path, str(exc)))
            continue
        if len(pending) >= cfg.batch_size:
            flush()
    flush()
    return report
