"""Column-major run-length encoding of binary instance masks.

Counts alternate background/foreground runs over the Fortran-order flattened
mask, always starting with the (possibly zero) background run, matching the
uncompressed COCO convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RleError(ValueError):
    pass


@dataclass
class RleMask:
    size: tuple          # (height, width)
    counts: list         # run lengths, first is the leading zero-run

    def area(self) -> int:
        return int(sum(self.counts[1::2]))


def encode_rle(mask: np.ndarray) -> RleMask:
    """Encode a binary (h, w) mask; decode(encode(m)) == m."""
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise RleError("mask must be a non-empty 2D array")
    h, w = m.shape
    flat = (m != 0).astype(np.uint8).ravel(order="F")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size])))
    counts = runs.tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return RleMask(size=(h, w), counts=counts)


def decode_rle(r: RleMask) -> np.ndarray:
    """Exact inverse of encode_rle; malformed counts raise RleError."""
    h, w = int(r.size[0]), int(r.size[1])
    if h < 1 or w < 1:
        raise RleError("mask size must be positive")
    counts = np.asarray(r.counts, dtype=np.int64)
    if counts.size and (counts < 0).any():
        raise RleError("negative run length")
    total = int(counts.sum())
    if total != h * w:
        raise RleError(f"run lengths sum to {total}, expected {h * w}")
    values = np.zeros(counts.size, dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F").astype(bool)
