"""Frozen ViT patch-feature exporter for the FMAP / npy feature formats."""

from .errors import ImageDecodeError, ModelLoadError, VitfeatError
from .extract import ExtractorConfig, extract_features, preprocess_image, run_extraction
from .fmap import read_fmap, write_fmap
from .model import ARCHS, VisionTransformer, arch_spec, build_model

__version__ = "0.1.0"
