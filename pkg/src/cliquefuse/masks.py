"""Binary masks, probability masks, and the pixel algebra everything else builds on.

A :class:`Mask` is a packed boolean grid with a run-length text form for
interchange (row-major counts, background run first).  A :class:`ProbMask`
stores per-pixel probabilities as 8-bit levels, ``value = level / 255``, which
matches the grayscale-PNG interchange format and keeps averaging exact: sums
are carried in integer arithmetic and divided once, rounding half up.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np
from PIL import Image


class ShapeMismatch(ValueError):
    """Operands live on different grids."""


class GridShape(NamedTuple):
    height: int
    width: int

    @property
    def pixels(self) -> int:
        return self.height * self.width


def _as_grid(shape) -> GridShape:
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise ValueError(f"grid must be at least 1x1, got {h}x{w}")
    return GridShape(h, w)


class Mask:
    """Binary region on a fixed grid."""

    __slots__ = ("shape", "pixels")

    def __init__(self, shape, pixels: np.ndarray):
        grid = _as_grid(shape)
        px = np.ascontiguousarray(pixels, dtype=bool)
        if px.shape != (grid.height, grid.width):
            raise ShapeMismatch(
                f"pixel array {px.shape} does not match grid {grid.height}x{grid.width}"
            )
        px.setflags(write=False)
        object.__setattr__(self, "shape", grid)
        object.__setattr__(self, "pixels", px)

    def __setattr__(self, name, value):
        raise AttributeError("Mask is immutable")

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"Mask({self.shape.height}x{self.shape.width}, area={area(self)})"

    @classmethod
    def empty(cls, shape) -> "Mask":
        grid = _as_grid(shape)
        return cls(grid, np.zeros((grid.height, grid.width), dtype=bool))

    @classmethod
    def full(cls, shape) -> "Mask":
        grid = _as_grid(shape)
        return cls(grid, np.ones((grid.height, grid.width), dtype=bool))

    @classmethod
    def from_rle(cls, shape, counts: Iterable[int]) -> "Mask":
        """Decode the row-major run-length text form.

        ``counts`` alternates background/foreground run lengths starting with a
        background run.  Canonical form is required: counts sum to the grid
        size, only the leading count may be zero, and no trailing zero run.
        """
        grid = _as_grid(shape)
        runs = [int(c) for c in counts]
        if not runs:
            raise ValueError("empty run list")
        if any(c < 0 for c in runs):
            raise ValueError(f"negative run length in {runs}")
        if any(c == 0 for c in runs[1:]):
            raise ValueError("zero-length run after the first entry (non-canonical)")
        total = sum(runs)
        if total != grid.pixels:
            raise ValueError(
                f"run lengths sum to {total}, expected {grid.pixels} for "
                f"{grid.height}x{grid.width}"
            )
        values = np.zeros(len(runs), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, runs)
        return cls(grid, flat.reshape(grid.height, grid.width))

    def to_rle(self) -> list[int]:
        """Encode to the canonical row-major run-length form."""
        flat = self.pixels.ravel()
        if not flat.any():
            return [self.shape.pixels]
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs.insert(0, 0)
        return [int(r) for r in runs]

    def to_array(self) -> np.ndarray:
        return np.array(self.pixels, dtype=bool)


class ProbMask:
    """Per-pixel probability field quantized to 8-bit levels (value = level/255)."""

    __slots__ = ("shape", "levels")

    def __init__(self, shape, levels: np.ndarray):
        grid = _as_grid(shape)
        lv = np.ascontiguousarray(levels, dtype=np.uint8)
        if lv.shape != (grid.height, grid.width):
            raise ShapeMismatch(
                f"level array {lv.shape} does not match grid {grid.height}x{grid.width}"
            )
        lv.setflags(write=False)
        object.__setattr__(self, "shape", grid)
        object.__setattr__(self, "levels", lv)

    def __setattr__(self, name, value):
        raise AttributeError("ProbMask is immutable")

    def __eq__(self, other):
        if not isinstance(other, ProbMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash((self.shape, self.levels.tobytes()))

    def __repr__(self):
        return f"ProbMask({self.shape.height}x{self.shape.width})"

    @classmethod
    def from_float(cls, values: np.ndarray) -> "ProbMask":
        """Quantize a float field in [0, 1] to levels (round to nearest, ties to even)."""
        arr = np.asarray(values, dtype=np.float64)
        levels = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
        return cls(arr.shape, levels)

    @classmethod
    def from_mask(cls, mask: Mask) -> "ProbMask":
        return cls(mask.shape, np.where(mask.pixels, 255, 0).astype(np.uint8))

    @classmethod
    def uniform(cls, shape, value: float) -> "ProbMask":
        grid = _as_grid(shape)
        level = int(np.clip(np.rint(value * 255.0), 0, 255))
        return cls(grid, np.full((grid.height, grid.width), level, dtype=np.uint8))

    def values(self) -> np.ndarray:
        return self.levels.astype(np.float64) / 255.0

    @classmethod
    def load_png(cls, path) -> "ProbMask":
        """Read an 8-bit grayscale PNG (0 -> 0.0, 255 -> 1.0)."""
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
        return cls(arr.shape, arr)

    def save_png(self, path) -> None:
        Image.fromarray(np.asarray(self.levels), mode="L").save(path, format="PNG")


def iou(a: Mask, b: Mask) -> float:
    """Intersection over union of two masks; 0.0 when both are empty."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"iou on {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a.pixels & b.pixels))
    union = int(np.count_nonzero(a.pixels | b.pixels))
    if union == 0:
        return 0.0
    return inter / union


def binarize(p: ProbMask, threshold: float) -> Mask:
    """Pixels whose probability is >= threshold (inclusive)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return Mask(p.shape, p.values() >= threshold)


def average(ps: list[ProbMask], divisor: int) -> ProbMask:
    """Per-pixel sum of ``ps`` divided by ``divisor``, rounded half up, clamped to 1.

    The divisor may exceed the list length (clique voting divides by the clip
    size, not the clique size); sums are exact integers until the single final
    division.
    """
    if not ps:
        raise ValueError("average of an empty list")
    if divisor < 1:
        raise ValueError(f"divisor must be >= 1, got {divisor}")
    shape = ps[0].shape
    total = np.zeros((shape.height, shape.width), dtype=np.int64)
    for p in ps:
        if p.shape != shape:
            raise ShapeMismatch(f"average over {shape} vs {p.shape}")
        total += p.levels
    levels = (2 * total + divisor) // (2 * divisor)
    return ProbMask(shape, np.minimum(levels, 255).astype(np.uint8))


def area(m: Mask) -> int:
    """Foreground pixel count."""
    return int(np.count_nonzero(m.pixels))


def boundary(m: Mask) -> Mask:
    """Foreground pixels with a 4-connected background or off-grid neighbor."""
    fg = m.pixels
    padded = np.pad(fg, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return Mask(m.shape, fg & ~interior)
