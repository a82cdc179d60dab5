"""Run-length encoded binary masks and IoU computed in run space.

Runs are column-major (Fortran order over a height x width mask) and
alternate background/foreground, starting with background; a mask whose
first pixel is foreground starts with a zero-length background run. The
compressed string form matches the variable-length integer encoding used
by the common detection toolkits: 5 value bits per character offset by
48, with a continuation flag, sign extension, and runs at index >= 3
delta-coded against the run two places earlier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyMasksError


@dataclass(frozen=True)
class RleMask:
    """Immutable RLE mask; ``area`` is cached at construction."""

    width: int
    height: int
    runs: tuple[int, ...]
    area: int = field(default=-1)

    def __post_init__(self) -> None:
        total = sum(self.runs)
        if total != self.width * self.height:
            raise DimensionMismatchError(
                f"runs sum to {total}, expected {self.width * self.height}"
            )
        fg = sum(self.runs[1::2])
        if self.area == -1:
            object.__setattr__(self, "area", fg)
        elif self.area != fg:
            raise DimensionMismatchError(f"cached area {self.area} != foreground total {fg}")

    @classmethod
    def from_dense(cls, mask: np.ndarray) -> "RleMask":
        """Encode a 2-D boolean array (shape ``(height, width)``)."""
        if mask.ndim != 2:
            raise DimensionMismatchError(f"expected 2-D mask, got shape {mask.shape}")
        h, w = mask.shape
        flat = np.asarray(mask, dtype=bool).ravel(order="F")
        if flat.size == 0:
            return cls(w, h, (0,))
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs.insert(0, 0)
        return cls(w, h, tuple(int(r) for r in runs))

    def to_dense(self) -> np.ndarray:
        """Decode to a 2-D boolean array of shape ``(height, width)``."""
        flat = np.zeros(self.width * self.height, dtype=bool)
        pos = 0
        fg = False
        for run in self.runs:
            if fg:
                flat[pos : pos + run] = True
            pos += run
            fg = not fg
        return flat.reshape((self.height, self.width), order="F")

    def foreground_intervals(self) -> np.ndarray:
        """Foreground [start, end) intervals over the flat column-major axis."""
        bounds = np.concatenate(([0], np.cumsum(self.runs)))
        starts = bounds[1:-1:2]
        ends = bounds[2::2]
        return np.stack([starts, ends], axis=1).astype(np.int64)

    def bbox(self) -> tuple[int, int, int, int]:
        """Tight (x, y, w, h) box around the foreground; (0, 0, 0, 0) when empty."""
        if self.area == 0:
            return (0, 0, 0, 0)
        dense = self.to_dense()
        rows = np.flatnonzero(dense.any(axis=1))
        cols = np.flatnonzero(dense.any(axis=0))
        y0, y1 = int(rows[0]), int(rows[-1])
        x0, x1 = int(cols[0]), int(cols[-1])
        return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def encode_counts(runs: tuple[int, ...] | list[int]) -> str:
    """Compress runs into the toolkit-standard ASCII string."""
    out = []
    for i, run in enumerate(runs):
        x = int(run)
        if i > 2:
            x -= int(runs[i - 2])
        while True:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
            if not more:
                break
    return "".join(out)


def decode_counts(s: str) -> tuple[int, ...]:
    """Inverse of :func:`encode_counts`."""
    runs: list[int] = []
    pos = 0
    n = len(s)
    while pos < n:
        x = 0
        k = 0
        while True:
            c = ord(s[pos]) - 48
            x |= (c & 0x1F) << 5 * k
            more = c & 0x20
            pos += 1
            k += 1
            if not more:
                if c & 0x10:
                    x |= -1 << 5 * k
                break
        if len(runs) > 2:
            x += runs[-2]
        runs.append(x)
    return tuple(runs)


def _interval_overlap(a: np.ndarray, b: np.ndarray) -> int:
    """Total overlap length between two sorted, disjoint interval sets."""
    total = 0
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        lo = max(a[i, 0], b[j, 0])
        hi = min(a[i, 1], b[j, 1])
        if lo < hi:
            total += int(hi - lo)
        if a[i, 1] <= b[j, 1]:
            i += 1
        else:
            j += 1
    return total


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection-over-union computed directly on the run encoding."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatchError(
            f"mask sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if a.area == 0 and b.area == 0:
        raise EmptyMasksError("IoU of two empty masks is undefined")
    inter = _interval_overlap(a.foreground_intervals(), b.foreground_intervals())
    union = a.area + b.area - inter
    return inter / union
