"""Run-length mask codecs.

Two encodings meet here.  Detector results use the COCO convention: the mask
is flattened column by column and the counts alternate background/foreground
starting with background; counts arrive either as a plain list or as the
compact ASCII string (5-bit chunks, chars 48..111, every count after the
third stored as a delta against the count two places back).  The pipeline
manifest wants the same alternation but row-major, in canonical form: all
counts positive except that the first may be zero, summing to height*width.
"""

from __future__ import annotations

import numpy as np


class RLEError(ValueError):
    """A run-length payload that cannot represent a mask of the stated size."""


def decode_count_string(data: str) -> list[int]:
    """Unpack a COCO compact counts string into plain counts."""
    counts: list[int] = []
    pos = 0
    while pos < len(data):
        value = 0
        shift = 0
        more = True
        while more:
            if pos >= len(data):
                raise RLEError("count string ends mid-value")
            chunk = ord(data[pos]) - 48
            if not 0 <= chunk <= 63:
                raise RLEError(f"count string holds byte {ord(data[pos])} outside 48..111")
            value |= (chunk & 0x1F) << shift
            more = bool(chunk & 0x20)
            pos += 1
            shift += 5
            if not more and chunk & 0x10:
                # highest data bit set on the last chunk: negative value
                value |= -1 << shift
        if len(counts) > 2:
            value += counts[-2]
        counts.append(value)
    return counts


def encode_count_string(counts: list[int]) -> str:
    chars: list[str] = []
    for index, count in enumerate(counts):
        value = count - (counts[index - 2] if index > 2 else 0)
        more = True
        while more:
            chunk = value & 0x1F
            value >>= 5
            more = value != -1 if chunk & 0x10 else value != 0
            if more:
                chunk |= 0x20
            chars.append(chr(48 + chunk))
    return "".join(chars)


def counts_from_segmentation(segmentation: dict) -> tuple[int, int, list[int]]:
    """Pull (height, width, counts) out of a COCO segmentation object."""
    if not isinstance(segmentation, dict):
        raise RLEError(f"segmentation must be an object, got {type(segmentation).__name__}")
    size = segmentation.get("size")
    if (
        not isinstance(size, list)
        or len(size) != 2
        or not all(isinstance(v, int) and v >= 1 for v in size)
    ):
        raise RLEError(f"segmentation size must be [height, width], got {size!r}")
    raw = segmentation.get("counts")
    if isinstance(raw, str):
        counts = decode_count_string(raw)
    elif isinstance(raw, list):
        if not all(isinstance(v, int) for v in raw):
            raise RLEError("count list must hold integers")
        counts = list(raw)
    else:
        raise RLEError(f"counts must be a string or list, got {type(raw).__name__}")
    return size[0], size[1], counts


def expand_column_major(height: int, width: int, counts: list[int]) -> np.ndarray:
    """COCO counts to a boolean (height, width) array."""
    if any(c < 0 for c in counts):
        raise RLEError(f"negative run length in {counts}")
    total = sum(counts)
    if total != height * width:
        raise RLEError(f"counts sum to {total}, mask needs {height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    for index, count in enumerate(counts):
        if index % 2:
            flat[pos : pos + count] = True
        pos += count
    return flat.reshape((height, width), order="F")


def encode_row_major(pixels: np.ndarray) -> list[int]:
    """Boolean array to canonical manifest counts (background first)."""
    flat = np.asarray(pixels, dtype=bool).reshape(-1)
    if flat.size == 0:
        raise RLEError("empty mask")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts


def decode_row_major(height: int, width: int, counts: list[int]) -> np.ndarray:
    """Canonical manifest counts back to a boolean array, strictly validated."""
    if not counts:
        raise RLEError("empty count list")
    if any(c < 0 for c in counts):
        raise RLEError(f"negative run length in {counts}")
    if any(c == 0 for c in counts[1:]):
        raise RLEError("zero-length run after the first count")
    total = sum(counts)
    if total != height * width:
        raise RLEError(f"counts sum to {total}, mask needs {height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    for index, count in enumerate(counts):
        if index % 2:
            flat[pos : pos + count] = True
        pos += count
    return flat.reshape((height, width))


def reference_decode_row_major(height: int, width: int, counts: list[int]) -> np.ndarray:
    """Pixel-by-pixel re-derivation used to cross-check decode_row_major.

    Walks every pixel position independently instead of slicing runs, and
    imposes the same canonical-form constraints.
    """
    if not counts:
        raise RLEError("empty count list")
    out = np.zeros((height, width), dtype=bool)
    position = 0
    for index, count in enumerate(counts):
        if count < 0 or (count == 0 and index > 0):
            raise RLEError(f"run {index} has length {count}")
        for _ in range(count):
            if position >= height * width:
                raise RLEError("runs overflow the grid")
            out[position // width, position % width] = index % 2 == 1
            position += 1
    if position != height * width:
        raise RLEError(f"runs cover {position} pixels, mask needs {height * width}")
    return out
