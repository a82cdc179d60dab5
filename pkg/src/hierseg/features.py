"""Patch feature map and RGB image loading, validation, and similarity.

The on-disk feature format ("FMAP") is a small binary container:

    magic "FMAP" (4 bytes) | version u16 = 1 | grid_h u32 | grid_w u32 |
    dim u32 | patch_size u16 | image_id length u16 | image_id (UTF-8) |
    grid_h * grid_w * dim little-endian float32

All header integers are little-endian. Features are stored raw
(unnormalized); normalization happens inside :func:`cosine_similarity`
so that region merging can average the original values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    MalformedHeaderError,
    NonFiniteValueError,
    ZeroVectorError,
)

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
_HEADER = struct.Struct("<4sHIIIHH")

NUMPY_MAGIC = b"\x93NUMPY"


@dataclass
class FeatureMap:
    """A grid of per-patch feature vectors plus geometry metadata.

    ``data`` has shape ``(grid_h, grid_w, dim)`` and dtype float32; entry
    ``[r, c]`` is the feature of the patch whose top-left pixel is at
    ``(r * patch_size, c * patch_size)``.
    """

    grid_h: int
    grid_w: int
    dim: int
    patch_size: int
    data: np.ndarray
    image_id: str

    def __post_init__(self) -> None:
        if min(self.grid_h, self.grid_w, self.dim, self.patch_size) < 1:
            raise MalformedHeaderError(
                f"grid {self.grid_h}x{self.grid_w}, dim {self.dim}, "
                f"patch_size {self.patch_size}: all must be >= 1"
            )
        expected = (self.grid_h, self.grid_w, self.dim)
        if self.data.shape != expected:
            raise DimensionMismatchError(
                f"feature data shape {self.data.shape} != declared {expected}"
            )
        if not np.isfinite(self.data).all():
            raise NonFiniteValueError(f"feature map {self.image_id!r} contains non-finite values")

    @property
    def image_width(self) -> int:
        return self.grid_w * self.patch_size

    @property
    def image_height(self) -> int:
        return self.grid_h * self.patch_size


@dataclass
class RgbImage:
    """8-bit RGB pixels with shape ``(height, width, 3)``."""

    width: int
    height: int
    pixels: np.ndarray
    image_id: str

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3):
            raise DimensionMismatchError(
                f"pixel array shape {self.pixels.shape} != ({self.height}, {self.width}, 3)"
            )
        if self.pixels.dtype != np.uint8:
            raise DimensionMismatchError(f"pixels must be uint8, got {self.pixels.dtype}")

    def matches(self, fm: FeatureMap) -> bool:
        """True when this image tiles exactly into the feature map's patch grid."""
        return self.width == fm.image_width and self.height == fm.image_height


def load_feature_map(path: str | Path) -> FeatureMap:
    """Read and validate an FMAP file.

    Raises:
        MalformedHeaderError: bad magic, version, or header values.
        DimensionMismatchError: payload byte count disagrees with the header.
        NonFiniteValueError: payload contains NaN or infinities.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than FMAP header")
    magic, version, grid_h, grid_w, dim, patch_size, id_len = _HEADER.unpack_from(raw)
    if magic != FMAP_MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != FMAP_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    offset = _HEADER.size
    if len(raw) < offset + id_len:
        raise MalformedHeaderError(f"{path}: truncated image_id")
    image_id = raw[offset : offset + id_len].decode("utf-8")
    offset += id_len
    if min(grid_h, grid_w, dim, patch_size) < 1:
        raise MalformedHeaderError(
            f"{path}: invalid geometry grid {grid_h}x{grid_w}, dim {dim}, patch {patch_size}"
        )
    expected = grid_h * grid_w * dim * 4
    actual = len(raw) - offset
    if actual != expected:
        raise DimensionMismatchError(
            f"{path}: payload is {actual} bytes, header declares {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=grid_h * grid_w * dim, offset=offset)
    data = data.reshape(grid_h, grid_w, dim).copy()
    if not np.isfinite(data).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    return FeatureMap(grid_h, grid_w, dim, patch_size, data, image_id)


def write_feature_map(fm: FeatureMap, path: str | Path) -> None:
    """Write ``fm`` in the FMAP format; inverse of :func:`load_feature_map`."""
    id_bytes = fm.image_id.encode("utf-8")
    header = _HEADER.pack(
        FMAP_MAGIC, FMAP_VERSION, fm.grid_h, fm.grid_w, fm.dim, fm.patch_size, len(id_bytes)
    )
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + id_bytes + payload)


def load_numpy_feature_map(
    path: str | Path, patch_size: int = 8, image_id: str | None = None
) -> FeatureMap:
    """Compatibility reader for ``.npy`` arrays of shape (H, W, D), float32.

    ``patch_size`` and ``image_id`` are not stored in that container, so the
    caller supplies them; ``image_id`` defaults to the file stem.
    """
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(len(NUMPY_MAGIC)) != NUMPY_MAGIC:
            raise MalformedHeaderError(f"{path}: not an array container (bad magic)")
    arr = np.load(path)
    if arr.ndim != 3:
        raise MalformedHeaderError(f"{path}: expected 3-D array (H, W, D), got shape {arr.shape}")
    if arr.dtype != np.float32:
        raise MalformedHeaderError(f"{path}: expected float32 payload, got {arr.dtype}")
    arr = np.ascontiguousarray(arr)
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")
    h, w, d = arr.shape
    return FeatureMap(h, w, d, patch_size, arr, image_id or path.stem)


def load_rgb_image(path: str | Path, image_id: str | None = None) -> RgbImage:
    """Load an image file as 8-bit RGB."""
    from PIL import Image

    path = Path(path)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    h, w, _ = pixels.shape
    return RgbImage(w, h, pixels, image_id or path.stem)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two feature vectors, clamped to [-1, 1].

    Raises ZeroVectorError when either vector has zero norm (degenerate
    feature input), and DimensionMismatchError on unequal lengths.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    sim = float(np.dot(a, b)) / (norm_a * norm_b)
    return min(1.0, max(-1.0, sim))
