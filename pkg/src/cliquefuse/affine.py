"""Per-frame affine motion tables and the deterministic warp used to apply them.

A motion table entry describes how the scene moves from frame ``t`` to
``t + 1``: translate by ``(dx, dy)``, scale by ``scale`` and rotate by
``rotation_deg`` about the grid center.  Warping maps each source pixel
forward to its nearest target pixel, so pixel count never grows and pure
translations move masks exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MotionStep:
    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0
    rotation_deg: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "MotionStep":
        return cls(
            dx=float(d.get("dx", 0.0)),
            dy=float(d.get("dy", 0.0)),
            scale=float(d.get("scale", 1.0)),
            rotation_deg=float(d.get("rotation_deg", 0.0)),
        )


def load_motion_table(path) -> tuple[MotionStep, ...]:
    """Read a JSON array of per-frame {dx, dy, scale, rotation_deg} entries."""
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError(f"motion table must be a JSON array, got {type(raw).__name__}")
    return tuple(MotionStep.from_dict(entry) for entry in raw)


def step_matrix(step: MotionStep, center: tuple[float, float]) -> np.ndarray:
    """3x3 homogeneous matrix for one step, acting on (x, y) points.

    Scale and rotation pivot about ``center``; the translation is applied last.
    """
    cx, cy = center
    theta = math.radians(step.rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    a = step.scale * c
    b = step.scale * s
    # x' = a(x-cx) - b(y-cy) + cx + dx ; y' = b(x-cx) + a(y-cy) + cy + dy
    return np.array(
        [
            [a, -b, cx + step.dx - a * cx + b * cy],
            [b, a, cy + step.dy - b * cx - a * cy],
            [0.0, 0.0, 1.0],
        ]
    )


def chain_matrix(
    table: tuple[MotionStep, ...],
    source: int,
    target: int,
    center: tuple[float, float],
) -> np.ndarray:
    """Composed transform taking frame ``source`` coordinates to frame ``target``.

    Entry ``t`` of the table moves frame ``t`` to ``t + 1``; going backward uses
    the inverses.  The table must cover every step traversed.
    """
    if target >= source:
        hi = target
    else:
        hi = source
    if hi > len(table):
        raise ValueError(
            f"motion table with {len(table)} steps cannot reach frame {hi}"
        )
    mat = np.eye(3)
    if target >= source:
        for t in range(source, target):
            mat = step_matrix(table[t], center) @ mat
    else:
        for t in range(source - 1, target - 1, -1):
            mat = np.linalg.inv(step_matrix(table[t], center)) @ mat
    return mat


def warp_levels(levels: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Forward-map nonzero pixels through ``matrix``; collisions keep the max level.

    Off-grid pixels are dropped, so the warped foreground never gains area.
    """
    h, w = levels.shape
    out = np.zeros_like(levels)
    rows, cols = np.nonzero(levels)
    if rows.size == 0:
        return out
    pts = np.stack([cols.astype(np.float64), rows.astype(np.float64), np.ones(rows.size)])
    mapped = matrix @ pts
    tx = np.rint(mapped[0]).astype(np.int64)
    ty = np.rint(mapped[1]).astype(np.int64)
    keep = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    np.maximum.at(out, (ty[keep], tx[keep]), levels[rows[keep], cols[keep]])
    return out
