"""Build pipeline manifests from detector result dumps.

The input is the usual results array: one record per detection carrying an
image id, a COCO segmentation, a confidence score, and optionally a category
id.  Image ids are taken as 0-based frame indices into the sorted listing of
the frames directory.  Scores map to objectness unchanged and category ids
ride along as opaque metadata.
"""

from __future__ import annotations

import json
import os

from PIL import Image

from .rle import (
    RLEError,
    counts_from_segmentation,
    decode_row_major,
    encode_row_major,
    expand_column_major,
    reference_decode_row_major,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class ConversionError(ValueError):
    """Input that cannot be converted at all (as opposed to per-record errors)."""


def list_frames(frames_dir: str) -> list[str]:
    try:
        names = os.listdir(frames_dir)
    except OSError as exc:
        raise ConversionError(f"cannot list frames directory {frames_dir}: {exc}") from exc
    frames = sorted(n for n in names if n.lower().endswith(IMAGE_SUFFIXES))
    if not frames:
        raise ConversionError(f"no frame images in {frames_dir}")
    return frames


def _frame_grid(path: str) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.height, img.width


def convert(results_path: str, frames_dir: str, out_path: str) -> tuple[dict | None, list[str]]:
    """Convert one results file.  Returns (manifest, errors).

    The manifest is written to ``out_path`` only when the error list is empty;
    any manifest returned alongside errors is None.
    """
    try:
        with open(results_path, encoding="utf-8") as fh:
            results = json.load(fh)
    except OSError as exc:
        raise ConversionError(f"cannot read {results_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConversionError(f"{results_path} is not valid JSON: {exc}") from exc
    if not isinstance(results, list):
        raise ConversionError(f"{results_path} must hold a JSON array of detections")

    frames = list_frames(frames_dir)
    grid: tuple[int, int] | None = None
    errors: list[str] = []
    detections = []
    for index, record in enumerate(results):
        context = f"record {index}"
        if not isinstance(record, dict):
            errors.append(f"{context}: not an object")
            continue
        frame = record.get("image_id")
        if not isinstance(frame, int) or not 0 <= frame < len(frames):
            errors.append(
                f"{context}: image_id {frame!r} does not name one of the "
                f"{len(frames)} frames"
            )
            continue
        score = record.get("score")
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            errors.append(f"{context}: score must be in [0, 1], got {score!r}")
            continue
        try:
            height, width, counts = counts_from_segmentation(record.get("segmentation"))
            pixels = expand_column_major(height, width, counts)
        except RLEError as exc:
            errors.append(f"{context}: {exc}")
            continue
        if grid is None:
            grid = (height, width)
        elif grid != (height, width):
            errors.append(
                f"{context}: size {height}x{width} disagrees with {grid[0]}x{grid[1]}"
            )
            continue
        detection = {
            "frame": frame,
            "rle": encode_row_major(pixels),
            "objectness": float(score),
        }
        if "category_id" in record:
            detection["category_id"] = record["category_id"]
        detections.append(detection)

    first_frame = os.path.join(frames_dir, frames[0])
    if grid is None:
        grid = _frame_grid(first_frame)
    else:
        actual = _frame_grid(first_frame)
        if actual != grid:
            errors.append(
                f"frame images are {actual[0]}x{actual[1]} but segmentations "
                f"say {grid[0]}x{grid[1]}"
            )
    if errors:
        return None, errors

    out_dir = os.path.dirname(os.path.abspath(out_path))
    manifest = {
        "video_id": os.path.basename(os.path.normpath(frames_dir)),
        "grid": {"h": grid[0], "w": grid[1]},
        "frames": [
            os.path.relpath(os.path.join(os.path.abspath(frames_dir), name), out_dir)
            for name in frames
        ],
        "detections": detections,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest, []


def roundtrip_check(manifest_path: str) -> dict:
    """Decode every manifest mask twice and report disagreements.

    One decoder slices runs, the other walks pixels; a corrupt payload fails
    in at least one of them or produces differing pixel sets.
    """
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ConversionError(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConversionError(f"{manifest_path} is not valid JSON: {exc}") from exc
    grid = manifest.get("grid") if isinstance(manifest, dict) else None
    detections = manifest.get("detections") if isinstance(manifest, dict) else None
    if not isinstance(grid, dict) or not isinstance(detections, list):
        raise ConversionError(f"{manifest_path} does not look like a manifest")
    height, width = int(grid.get("h", 0)), int(grid.get("w", 0))

    checked = 0
    skipped = 0
    mismatches: list[str] = []
    for index, det in enumerate(detections):
        context = f"detection {index}"
        if not isinstance(det, dict) or "rle" not in det:
            skipped += 1
            continue
        checked += 1
        counts = det["rle"]
        try:
            fast = decode_row_major(height, width, counts)
        except (RLEError, TypeError) as exc:
            mismatches.append(f"{context}: {exc}")
            continue
        reference = reference_decode_row_major(height, width, counts)
        if (fast != reference).any():
            mismatches.append(f"{context}: decoders disagree")
    return {"checked": checked, "skipped": skipped, "mismatches": mismatches}
