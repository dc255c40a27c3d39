"""COCO-style run-length mask codec: column-major runs packed into a char string.

The string packing matches the de-facto COCO tools convention (5 payload bits
per character offset by 48, with a continuation bit and difference coding of
every count against the one two positions back), so masks produced by common
segmentation exporters pass through unmodified.
"""

from __future__ import annotations

import numpy as np

from .core import DataError, RleMask


def _pack_counts(counts: list[int]) -> str:
    chars = []
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            piece = x & 0x1F
            x >>= 5
            more = (x != -1) if (piece & 0x10) else (x != 0)
            if more:
                piece |= 0x20
            chars.append(chr(piece + 48))
    return "".join(chars)


def _unpack_counts(s: str) -> list[int]:
    counts: list[int] = []
    p = 0
    n = len(s)
    while p < n:
        x = 0
        k = 0
        more = True
        while more:
            if p >= n:
                raise DataError("bad-rle", "truncated run-length string")
            c = ord(s[p]) - 48
            if not 0 <= c < 64:
                raise DataError("bad-rle", f"invalid run-length character at position {p}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def encode(bitmap: np.ndarray) -> RleMask:
    """Encode a 2-D binary mask into column-major run lengths.

    The first run counts zeros (possibly none), then runs alternate value.
    """
    arr = np.asarray(bitmap)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError("bad-mask", f"bitmap must be a non-empty 2-D array, got shape {arr.shape}")
    flat = (arr != 0).flatten(order="F")
    changes = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(size=(arr.shape[0], arr.shape[1]), counts=_pack_counts(counts))


def decode(mask: RleMask) -> np.ndarray:
    """Decode run lengths back to a 2-D boolean mask."""
    h, w = mask.size
    counts = _unpack_counts(mask.counts)
    if any(c < 0 for c in counts):
        raise DataError("bad-rle", "negative run length")
    total = sum(counts)
    if total != h * w:
        raise DataError("bad-rle", f"run lengths cover {total} pixels, canvas has {h * w}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")


def area(mask: RleMask) -> int:
    """Number of set pixels, straight from the run lengths."""
    counts = _unpack_counts(mask.counts)
    return int(sum(counts[1::2]))
