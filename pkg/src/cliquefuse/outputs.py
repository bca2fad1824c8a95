"""File outputs: indexed label PNGs, sequences.json, atomic writes.

Label maps use the segmentation benchmark convention: 8-bit palette PNGs
where 0 is background and object k takes palette entry k.  The palette is
the standard bit-shuffle colormap, so files open with the familiar colors
(1 = dark red, 2 = green, ...) in any image viewer.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np
from PIL import Image

from .masks import GridShape, Mask
from .metrics import GroundTruth
from .sequences import SequenceSet, Track


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def color_palette() -> np.ndarray:
    """256x3 uint8 palette: color j spreads the bits of j across RGB channels."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for j in range(256):
        label = j
        r = g = b = 0
        for shift in range(8):
            r |= ((label >> 0) & 1) << (7 - shift)
            g |= ((label >> 1) & 1) << (7 - shift)
            b |= ((label >> 2) & 1) << (7 - shift)
            label >>= 3
        palette[j] = (r, g, b)
    return palette


_PALETTE_FLAT = color_palette().reshape(-1).tolist()


def save_label_png(labels: np.ndarray, path: str) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be 2-D")
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must fit in 8 bits")
    image = Image.fromarray(labels.astype(np.uint8), mode="P")
    image.putpalette(_PALETTE_FLAT)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        image.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_gray_png(values: np.ndarray, path: str) -> None:
    values = np.asarray(values, dtype=np.uint8)
    if values.ndim != 2:
        raise ValueError("image must be 2-D")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    Image.fromarray(values, mode="L").save(path, format="PNG")


def load_label_png(path: str) -> np.ndarray:
    with Image.open(path) as image:
        if image.mode not in ("P", "L"):
            raise ValueError(f"{path}: expected an 8-bit label PNG, got mode {image.mode}")
        return np.asarray(image, dtype=np.int32)


def write_label_frames(labels: list[np.ndarray], out_dir: str) -> list[str]:
    paths = []
    for t, frame in enumerate(labels):
        path = os.path.join(out_dir, f"{t:05d}.png")
        save_label_png(frame, path)
        paths.append(path)
    return paths


def load_ground_truth_dir(gt_dir: str) -> GroundTruth:
    """Read a directory of numbered label PNGs into ground truth."""
    names = sorted(n for n in os.listdir(gt_dir) if n.endswith(".png"))
    if not names:
        raise ValueError(f"no label PNGs in {gt_dir}")
    maps = [load_label_png(os.path.join(gt_dir, name)) for name in names]
    return GroundTruth.from_label_maps(maps)


def sequences_to_json(seqs: SequenceSet) -> str:
    tracks = []
    for track in seqs.tracks:
        tracks.append(
            {
                "track_id": track.track_id,
                "key_frame": track.key_frame,
                "score": track.score,
                "masks": [m.to_rle() for m in track.masks],
            }
        )
    return json.dumps({"tracks": tracks}, indent=2, sort_keys=True) + "\n"


def write_sequences_json(seqs: SequenceSet, path: str) -> None:
    atomic_write_text(path, sequences_to_json(seqs))


def load_sequences_json(path: str, grid: GridShape) -> SequenceSet:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    tracks = []
    for entry in data["tracks"]:
        masks = tuple(Mask.from_rle(grid, counts) for counts in entry["masks"])
        tracks.append(
            Track(
                track_id=int(entry["track_id"]),
                key_frame=int(entry["key_frame"]),
                masks=masks,
                score=float(entry["score"]),
            )
        )
    return SequenceSet(tuple(tracks))
