"""Input manifest: one JSON document per video describing frames and detections.

Schema:
    {
      "video_id": str,
      "grid": {"h": int, "w": int},
      "frames": [path, ...],                     # one image per frame, in order
      "detections": [                            # any number, any order
        {"frame": int, "rle": [int, ...] | "prob_png": path,
         "objectness": float, "category_id": int?},
        ...
      ]
    }

Paths are resolved relative to the manifest file.  ``rle`` is the row-major
run-length encoding with background-first counts; ``prob_png`` points at an
8-bit grayscale PNG holding a probability mask.  ``category_id`` is carried
by converters from detector output and ignored here.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .masks import GridShape, Mask, ProbMask
from .outputs import atomic_write_text
from .propagation import Proposal, VideoFrames


class InputError(ValueError):
    """Malformed input data; maps to exit code 3 at the CLI."""


@dataclass(frozen=True)
class VideoManifest:
    video: VideoFrames
    per_frame: tuple[tuple[Proposal, ...], ...]

    @property
    def detections_by_frame(self) -> dict[int, tuple[Proposal, ...]]:
        return {t: props for t, props in enumerate(self.per_frame)}


def _require(data: dict, key: str, context: str):
    if key not in data:
        raise InputError(f"{context}: missing key {key!r}")
    return data[key]


def load_manifest(path: str, check_frames: bool = True) -> VideoManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"manifest {path} must be a JSON object")
    base = os.path.dirname(os.path.abspath(path))

    known = {"video_id", "grid", "frames", "detections"}
    extra = set(data) - known
    if extra:
        raise InputError(f"manifest {path}: unknown keys {sorted(extra)}")
    video_id = _require(data, "video_id", f"manifest {path}")
    if not isinstance(video_id, str) or not video_id:
        raise InputError(f"manifest {path}: video_id must be a nonempty string")
    grid_raw = _require(data, "grid", f"manifest {path}")
    if not isinstance(grid_raw, dict) or "h" not in grid_raw or "w" not in grid_raw:
        raise InputError(f"manifest {path}: grid must be {{h, w}}")
    try:
        grid = GridShape(int(grid_raw["h"]), int(grid_raw["w"]))
    except (TypeError, ValueError) as exc:
        raise InputError(f"manifest {path}: bad grid: {exc}") from exc
    if grid.height < 1 or grid.width < 1:
        raise InputError(f"manifest {path}: grid must be positive, got {grid}")

    frames_raw = _require(data, "frames", f"manifest {path}")
    if not isinstance(frames_raw, list) or not frames_raw:
        raise InputError(f"manifest {path}: frames must be a nonempty list")
    frame_paths = []
    for entry in frames_raw:
        if not isinstance(entry, str):
            raise InputError(f"manifest {path}: frame entries must be paths")
        resolved = entry if os.path.isabs(entry) else os.path.join(base, entry)
        if check_frames and not os.path.isfile(resolved):
            raise InputError(f"manifest {path}: frame file not found: {resolved}")
        frame_paths.append(resolved)
    video = VideoFrames(video_id, grid, len(frame_paths), tuple(frame_paths))

    detections_raw = _require(data, "detections", f"manifest {path}")
    if not isinstance(detections_raw, list):
        raise InputError(f"manifest {path}: detections must be a list")
    per_frame: list[list[Proposal]] = [[] for _ in range(video.frame_count)]
    for index, det in enumerate(detections_raw):
        context = f"manifest {path}: detection {index}"
        if not isinstance(det, dict):
            raise InputError(f"{context}: must be an object")
        det_extra = set(det) - {"frame", "rle", "prob_png", "objectness", "category_id"}
        if det_extra:
            raise InputError(f"{context}: unknown keys {sorted(det_extra)}")
        frame = _require(det, "frame", context)
        if not isinstance(frame, int) or not 0 <= frame < video.frame_count:
            raise InputError(
                f"{context}: frame must be an integer in [0, {video.frame_count}), got {frame!r}"
            )
        objectness = _require(det, "objectness", context)
        if not isinstance(objectness, (int, float)) or not 0.0 <= objectness <= 1.0:
            raise InputError(f"{context}: objectness must be in [0, 1], got {objectness!r}")
        has_rle = "rle" in det
        has_png = "prob_png" in det
        if has_rle == has_png:
            raise InputError(f"{context}: exactly one of rle or prob_png required")
        if has_rle:
            counts = det["rle"]
            if not isinstance(counts, list) or not all(isinstance(c, int) for c in counts):
                raise InputError(f"{context}: rle must be a list of integers")
            try:
                prob = ProbMask.from_mask(Mask.from_rle(grid, counts))
            except ValueError as exc:
                raise InputError(f"{context}: bad rle: {exc}") from exc
        else:
            png = det["prob_png"]
            if not isinstance(png, str):
                raise InputError(f"{context}: prob_png must be a path")
            resolved = png if os.path.isabs(png) else os.path.join(base, png)
            try:
                prob = ProbMask.load_png(resolved)
            except (OSError, ValueError) as exc:
                raise InputError(f"{context}: cannot load {resolved}: {exc}") from exc
            if prob.shape != grid:
                raise InputError(
                    f"{context}: mask grid {prob.shape} does not match video grid {grid}"
                )
        per_frame[frame].append(
            Proposal(
                source_frame=frame,
                prob=prob,
                objectness=float(objectness),
                proposal_id=index,
            )
        )
    return VideoManifest(video, tuple(tuple(props) for props in per_frame))


def write_manifest(
    path: str,
    video_id: str,
    grid: GridShape,
    frame_paths: list[str],
    per_frame: list[list[Proposal]],
    mask_format: str = "rle",
) -> None:
    """Serialize detections to a manifest next to already-written frame files.

    ``frame_paths`` are stored as given (normally relative to the manifest).
    With the default rle format every probability mask must be binary; use
    prob_png for soft masks, which writes one grayscale PNG per detection
    into a ``probs`` directory beside the manifest.
    """
    if mask_format not in ("rle", "prob_png"):
        raise ValueError(f"mask_format must be rle or prob_png, got {mask_format!r}")
    base = os.path.dirname(os.path.abspath(path))
    detections = []
    counter = 0
    for frame, props in enumerate(per_frame):
        for prop in props:
            entry: dict = {"frame": frame, "objectness": prop.objectness}
            if mask_format == "rle":
                levels = prop.prob.levels
                binary = np.isin(levels, (0, 255)).all()
                if not binary:
                    raise ValueError(
                        f"frame {frame}: soft mask cannot be stored as rle; use prob_png"
                    )
                entry["rle"] = Mask(prop.prob.shape, levels == 255).to_rle()
            else:
                probs_dir = os.path.join(base, "probs")
                os.makedirs(probs_dir, exist_ok=True)
                png_name = os.path.join("probs", f"det{counter:05d}.png")
                prop.prob.save_png(os.path.join(base, png_name))
                entry["prob_png"] = png_name
            detections.append(entry)
            counter += 1
    document = {
        "video_id": video_id,
        "grid": {"h": grid.height, "w": grid.width},
        "frames": list(frame_paths),
        "detections": detections,
    }
    atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")
