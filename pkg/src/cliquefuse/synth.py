"""Synthetic videos with exact ground truth, plus a detection noise model.

Scenes are lists of parametric shapes (rectangle, ellipse, L-polyomino) with
a per-frame motion step; rasterization is an inverse-transform point test at
pixel centers, so ground truth is analytic and integer translations shift
masks exactly.  Later objects occlude earlier ones.

The noise model turns ground truth into corrupted per-frame proposals the
way a detector would fail: missed objects, punched-out holes, boundary
wobble (seeded erosion or dilation), occasional splits, false-positive
blobs, and jittered objectness.  All randomness flows through PCG64 streams
keyed by (noise seed, scene seed, frame, object slot), so any single mask is
reproducible in isolation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .manifest import write_manifest
from .masks import GridShape, Mask, ProbMask
from .metrics import GroundTruth
from .outputs import save_gray_png, save_label_png
from .propagation import Proposal

SHAPE_KINDS = ("rectangle", "ellipse", "l-polyomino")

_FALSE_POSITIVE_SLOT = 1_000_000


@dataclass(frozen=True)
class MotionRule:
    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0
    rotation_deg: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "MotionRule":
        known = {"dx", "dy", "scale", "rotation_deg"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown motion keys: {sorted(extra)}")
        return cls(
            dx=float(data.get("dx", 0.0)),
            dy=float(data.get("dy", 0.0)),
            scale=float(data.get("scale", 1.0)),
            rotation_deg=float(data.get("rotation_deg", 0.0)),
        )


@dataclass(frozen=True)
class ObjectSpec:
    kind: str
    center: tuple[float, float]
    size: tuple[float, float]
    rotation_deg: float = 0.0
    motion: MotionRule = field(default_factory=MotionRule)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"shape size must be positive, got {self.size}")

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectSpec":
        known = {"kind", "center", "size", "rotation_deg", "motion"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown object keys: {sorted(extra)}")
        center = data.get("center")
        size = data.get("size")
        if not (isinstance(center, (list, tuple)) and len(center) == 2):
            raise ValueError("object center must be [x, y]")
        if not (isinstance(size, (list, tuple)) and len(size) == 2):
            raise ValueError("object size must be [width, height]")
        return cls(
            kind=data.get("kind", ""),
            center=(float(center[0]), float(center[1])),
            size=(float(size[0]), float(size[1])),
            rotation_deg=float(data.get("rotation_deg", 0.0)),
            motion=MotionRule.from_dict(data.get("motion", {})),
        )


@dataclass(frozen=True)
class SceneSpec:
    video_id: str
    grid: GridShape
    frames: int
    objects: tuple[ObjectSpec, ...]
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("scene needs at least one frame")
        if not self.objects:
            raise ValueError("scene needs at least one object")

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        known = {"video_id", "grid", "frames", "objects", "seed"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown scene keys: {sorted(extra)}")
        grid = data.get("grid", {})
        if not isinstance(grid, dict) or "h" not in grid or "w" not in grid:
            raise ValueError("scene grid must be {h, w}")
        objects = data.get("objects", [])
        if not isinstance(objects, list):
            raise ValueError("scene objects must be a list")
        return cls(
            video_id=str(data.get("video_id", "scene")),
            grid=GridShape(int(grid["h"]), int(grid["w"])),
            frames=int(data.get("frames", 1)),
            objects=tuple(ObjectSpec.from_dict(o) for o in objects),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class NoiseSpec:
    hole_rate: float = 0.0
    boundary_jitter_radius: int = 0
    split_prob: float = 0.0
    false_positive_rate: float = 0.0
    miss_rate: float = 0.0
    objectness_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("hole_rate", "split_prob", "false_positive_rate", "miss_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.boundary_jitter_radius < 0:
            raise ValueError("boundary_jitter_radius must be >= 0")
        if self.objectness_noise_sigma < 0:
            raise ValueError("objectness_noise_sigma must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpec":
        known = {
            "hole_rate",
            "boundary_jitter_radius",
            "split_prob",
            "false_positive_rate",
            "miss_rate",
            "objectness_noise_sigma",
            "seed",
        }
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown noise keys: {sorted(extra)}")
        kwargs = dict(data)
        if "boundary_jitter_radius" in kwargs:
            kwargs["boundary_jitter_radius"] = int(kwargs["boundary_jitter_radius"])
        if "seed" in kwargs:
            kwargs["seed"] = int(kwargs["seed"])
        return cls(**kwargs)

    @property
    def is_clean(self) -> bool:
        return (
            self.hole_rate == 0
            and self.boundary_jitter_radius == 0
            and self.split_prob == 0
            and self.false_positive_rate == 0
            and self.miss_rate == 0
            and self.objectness_noise_sigma == 0
        )


def _object_membership(obj: ObjectSpec, frame: int, grid: GridShape) -> np.ndarray:
    cx = obj.center[0] + frame * obj.motion.dx
    cy = obj.center[1] + frame * obj.motion.dy
    scale = obj.motion.scale**frame
    if scale <= 0:
        raise ValueError(f"object scale collapsed to {scale} at frame {frame}")
    theta = math.radians(obj.rotation_deg + frame * obj.motion.rotation_deg)
    ys, xs = np.mgrid[0 : grid.height, 0 : grid.width]
    rel_x = xs - cx
    rel_y = ys - cy
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ux = (cos_t * rel_x + sin_t * rel_y) / scale
    uy = (-sin_t * rel_x + cos_t * rel_y) / scale
    half_w, half_h = obj.size[0] / 2.0, obj.size[1] / 2.0
    if obj.kind == "rectangle":
        return (np.abs(ux) <= half_w) & (np.abs(uy) <= half_h)
    if obj.kind == "ellipse":
        return (ux / half_w) ** 2 + (uy / half_h) ** 2 <= 1.0
    inside = (np.abs(ux) <= half_w) & (np.abs(uy) <= half_h)
    return inside & ~((ux > 0) & (uy < 0))


def render_scene(spec: SceneSpec) -> tuple[list[np.ndarray], GroundTruth]:
    """Rasterize every frame; returns grayscale frame images and ground truth.

    Frame images are simple intensity renderings (each object a distinct gray
    level) for viewing and for propagator plugins; ground truth carries the
    label maps.  An object with zero pixels on frame 0 is rejected outright.
    """
    label_maps = []
    frames = []
    for t in range(spec.frames):
        labels = np.zeros((spec.grid.height, spec.grid.width), dtype=np.int32)
        for index, obj in enumerate(spec.objects, start=1):
            member = _object_membership(obj, t, spec.grid)
            if t == 0 and not member.any():
                raise ValueError(f"object {index} ({obj.kind}) has zero area on frame 0")
            labels[member] = index
        label_maps.append(labels)
        image = np.zeros_like(labels, dtype=np.uint8)
        for index in range(1, len(spec.objects) + 1):
            image[labels == index] = min(40 + 50 * index, 255)
        frames.append(image)
    return frames, GroundTruth.from_label_maps(label_maps)


def _rng(noise_seed: int, scene_seed: int, frame: int, slot: int) -> np.random.Generator:
    seq = np.random.SeedSequence([noise_seed, scene_seed, frame, slot])
    return np.random.Generator(np.random.PCG64(seq))


def _disk(radius: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1)
    return axis[:, None] ** 2 + axis[None, :] ** 2 <= radius**2


def _punch_holes(arr: np.ndarray, rng: np.random.Generator, hole_rate: float) -> np.ndarray:
    rows, cols = np.nonzero(arr)
    if rows.size == 0:
        return arr
    top, bottom = int(rows.min()), int(rows.max())
    left, right = int(cols.min()), int(cols.max())
    box_h = bottom - top + 1
    box_w = right - left + 1
    out = arr.copy()
    for _ in range(3):
        if rng.random() >= hole_rate:
            continue
        hh = int(rng.integers(1, max(box_h // 2, 1) + 1))
        ww = int(rng.integers(1, max(box_w // 2, 1) + 1))
        r0 = top + int(rng.integers(0, box_h - hh + 1))
        c0 = left + int(rng.integers(0, box_w - ww + 1))
        out[r0 : r0 + hh, c0 : c0 + ww] = False
    return out


def _split_strip(arr: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.nonzero(arr)
    if rows.size == 0:
        return arr
    top, bottom = int(rows.min()), int(rows.max())
    left, right = int(cols.min()), int(cols.max())
    out = arr.copy()
    horizontal = bool(rng.integers(0, 2))
    span = (bottom - top + 1) if horizontal else (right - left + 1)
    width = 1 if span < 8 else 2
    wobble = span // 4
    offset = span // 2 + int(rng.integers(-wobble, wobble + 1))
    if horizontal:
        r0 = max(top + offset, 0)
        out[r0 : r0 + width, :] = False
    else:
        c0 = max(left + offset, 0)
        out[:, c0 : c0 + width] = False
    return out


def corrupt(gt: GroundTruth, noise: NoiseSpec, scene_seed: int = 0) -> list[list[Proposal]]:
    """Degrade ground truth into per-frame proposal lists.

    Per object and frame, in fixed draw order: maybe miss outright, then
    boundary jitter (random-radius erosion or dilation), hole punching,
    maybe a split strip, and an objectness of 1 minus folded Gaussian noise.
    False-positive blobs use their own stream per frame.  Proposals that end
    up empty are not emitted.
    """
    grid = gt.grid
    per_frame: list[list[Proposal]] = []
    next_id = 0
    for t in range(gt.frame_count):
        proposals: list[Proposal] = []
        labels = gt.labels[t]
        for obj in range(1, gt.object_count + 1):
            rng = _rng(noise.seed, scene_seed, t, obj)
            missed = rng.random() < noise.miss_rate
            arr = labels == obj
            if missed or not arr.any():
                continue
            if noise.boundary_jitter_radius > 0:
                radius = int(rng.integers(1, noise.boundary_jitter_radius + 1))
                grow = bool(rng.integers(0, 2))
                structure = _disk(radius)
                if grow:
                    arr = ndimage.binary_dilation(arr, structure=structure)
                else:
                    arr = ndimage.binary_erosion(arr, structure=structure)
            if noise.hole_rate > 0:
                arr = _punch_holes(arr, rng, noise.hole_rate)
            if noise.split_prob > 0 and rng.random() < noise.split_prob:
                arr = _split_strip(arr, rng)
            if not arr.any():
                continue
            objectness = 1.0
            if noise.objectness_noise_sigma > 0:
                drop = abs(rng.normal(0.0, noise.objectness_noise_sigma))
                objectness = float(np.clip(1.0 - drop, 0.0, 1.0))
            proposals.append(
                Proposal(
                    source_frame=t,
                    prob=ProbMask.from_mask(Mask(grid, arr)),
                    objectness=objectness,
                    proposal_id=next_id,
                )
            )
            next_id += 1
        if noise.false_positive_rate > 0:
            fp_rng = _rng(noise.seed, scene_seed, t, _FALSE_POSITIVE_SLOT)
            if fp_rng.random() < noise.false_positive_rate:
                hh = int(fp_rng.integers(max(grid.height // 8, 2), max(grid.height // 4, 3)))
                ww = int(fp_rng.integers(max(grid.width // 8, 2), max(grid.width // 4, 3)))
                r0 = int(fp_rng.integers(0, grid.height - hh + 1))
                c0 = int(fp_rng.integers(0, grid.width - ww + 1))
                blob = np.zeros((grid.height, grid.width), dtype=bool)
                blob[r0 : r0 + hh, c0 : c0 + ww] = True
                proposals.append(
                    Proposal(
                        source_frame=t,
                        prob=ProbMask.from_mask(Mask(grid, blob)),
                        objectness=float(fp_rng.uniform(0.2, 0.8)),
                        proposal_id=next_id,
                    )
                )
                next_id += 1
        per_frame.append(proposals)
    return per_frame


def load_scene_file(path: str) -> list[SceneSpec]:
    """Read a scene file: either one scene object or {"videos": [scene, ...]}."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "videos" in data:
        videos = data["videos"]
        if not isinstance(videos, list) or not videos:
            raise ValueError(f"{path}: videos must be a nonempty list")
        scenes = [SceneSpec.from_dict(v) for v in videos]
    elif isinstance(data, dict):
        scenes = [SceneSpec.from_dict(data)]
    else:
        raise ValueError(f"{path}: expected a scene object or {{videos: [...]}}")
    ids = [s.video_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate video ids")
    return scenes


def load_noise_file(path: str) -> NoiseSpec:
    with open(path, encoding="utf-8") as fh:
        return NoiseSpec.from_dict(json.load(fh))


def generate_video(scene: SceneSpec, noise: NoiseSpec, out_root: str) -> str:
    """Render one scene to disk in the corpus layout; returns the video dir.

    Layout: <out_root>/<video_id>/frames/%05d.png (grayscale renderings),
    gt/%05d.png (indexed label maps), manifest.json (run-length detections).
    """
    video_dir = os.path.join(out_root, scene.video_id)
    frames, gt = render_scene(scene)
    frame_paths = []
    for t, image in enumerate(frames):
        rel = os.path.join("frames", f"{t:05d}.png")
        save_gray_png(image, os.path.join(video_dir, rel))
        frame_paths.append(rel)
    for t, labels in enumerate(gt.labels):
        save_label_png(labels, os.path.join(video_dir, "gt", f"{t:05d}.png"))
    proposals = corrupt(gt, noise, scene.seed)
    write_manifest(
        os.path.join(video_dir, "manifest.json"),
        scene.video_id,
        scene.grid,
        frame_paths,
        proposals,
    )
    return video_dir
