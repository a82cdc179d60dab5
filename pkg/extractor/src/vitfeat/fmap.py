"""Writer (and a reader for self-checks) of the FMAP feature container.

Layout: "FMAP" magic, version u16 = 1, grid_h u32, grid_w u32, dim u32,
patch_size u16, image-id length u16 + UTF-8 bytes, then
grid_h * grid_w * dim little-endian float32 in row-major order. This is
the interchange format of the downstream label-generation toolkit; the
implementation here is intentionally standalone.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMAP"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIHH")


def write_fmap(path: str | Path, features: np.ndarray, patch_size: int, image_id: str) -> None:
    """Write an (H, W, D) float32 grid; rejects non-finite values."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 3:
        raise ValueError(f"expected (H, W, D) features, got shape {features.shape}")
    if not np.isfinite(features).all():
        raise ValueError("features contain non-finite values")
    h, w, d = features.shape
    id_bytes = image_id.encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, h, w, d, patch_size, len(id_bytes))
    Path(path).write_bytes(header + id_bytes + features.tobytes())


def read_fmap(path: str | Path) -> tuple[np.ndarray, int, str]:
    """Read back (features, patch_size, image_id); used by the test suite."""
    raw = Path(path).read_bytes()
    magic, version, h, w, d, patch_size, id_len = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not an FMAP v{VERSION} file")
    offset = _HEADER.size
    image_id = raw[offset : offset + id_len].decode("utf-8")
    offset += id_len
    expected = h * w * d * 4
    if len(raw) - offset != expected:
        raise ValueError(f"{path}: payload is {len(raw) - offset} bytes, expected {expected}")
    features = np.frombuffer(raw, dtype="<f4", count=h * w * d, offset=offset)
    return features.reshape(h, w, d).copy(), patch_size, image_id
