"""Segmentation quality metrics in the DAVIS style.

Region similarity J is mask IoU per frame, averaged over interior frames
(the first and last frames are skipped when the video has more than two).
Boundary accuracy F is the F-measure of boundary pixels matched within a
pixel tolerance, using disk dilation of the opposing boundary.  Recall is
the fraction of frames above 0.5; decay compares the first and last of four
equal time bins.  Predictions are assigned to ground-truth objects by
optimal bipartite matching on the J&F mean.

The IoU convention here differs from the graph stage on one edge case: two
empty masks compare as 1.0, so a frame where the object is absent and the
prediction agrees counts as correct rather than as a miss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .masks import GridShape, Mask, boundary
from .sequences import SequenceSet, Track


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame label maps: 0 is background, objects are 1..m with no gaps."""

    labels: tuple[np.ndarray, ...]
    object_count: int

    @classmethod
    def from_label_maps(cls, maps: Sequence[np.ndarray]) -> "GroundTruth":
        if not maps:
            raise ValueError("ground truth needs at least one frame")
        shape = maps[0].shape
        present: set[int] = set()
        frames = []
        for arr in maps:
            arr = np.asarray(arr)
            if arr.shape != shape:
                raise ValueError(f"label map shapes differ: {arr.shape} vs {shape}")
            if arr.ndim != 2:
                raise ValueError("label maps must be 2-D")
            frames.append(arr.astype(np.int32))
            present.update(int(v) for v in np.unique(arr))
        present.discard(0)
        m = max(present) if present else 0
        if present != set(range(1, m + 1)):
            raise ValueError(f"object labels must be contiguous from 1, got {sorted(present)}")
        return cls(tuple(frames), m)

    @property
    def frame_count(self) -> int:
        return len(self.labels)

    @property
    def grid(self) -> GridShape:
        h, w = self.labels[0].shape
        return GridShape(h, w)

    def object_masks(self, label: int) -> list[Mask]:
        if not 1 <= label <= self.object_count:
            raise ValueError(f"no object {label}; ground truth has {self.object_count}")
        return [Mask(self.grid, arr == label) for arr in self.labels]


def eval_iou(pred: Mask, gt: Mask) -> float:
    """Frame IoU with the benchmark convention: both empty counts as 1."""
    if pred.shape != gt.shape:
        raise ValueError(f"grid mismatch: {pred.shape} vs {gt.shape}")
    inter = int(np.count_nonzero(pred.pixels & gt.pixels))
    union = int(np.count_nonzero(pred.pixels | gt.pixels))
    if union == 0:
        return 1.0
    return inter / union


def _interior(values: Sequence[float]) -> list[float]:
    return list(values[1:-1]) if len(values) > 2 else list(values)


def region_similarity(track: Track, gt_object: Sequence[Mask]) -> tuple[list[float], float]:
    """Per-frame IoU for every frame, and the mean over interior frames."""
    if track.length != len(gt_object):
        raise ValueError(f"track covers {track.length} frames, ground truth {len(gt_object)}")
    values = [eval_iou(m, g) for m, g in zip(track.masks, gt_object)]
    return values, float(np.mean(_interior(values)))


def default_boundary_tolerance(shape: GridShape) -> int:
    return math.ceil(0.008 * math.hypot(shape.height, shape.width))


def _disk(radius: int) -> np.ndarray:
    if radius <= 0:
        return np.ones((1, 1), dtype=bool)
    axis = np.arange(-radius, radius + 1)
    return axis[:, None] ** 2 + axis[None, :] ** 2 <= radius**2


def boundary_f_frame(pred: Mask, gt: Mask, tol: int) -> float:
    pb = boundary(pred).pixels
    gb = boundary(gt).pixels
    np_pred = int(np.count_nonzero(pb))
    np_gt = int(np.count_nonzero(gb))
    if np_pred == 0 and np_gt == 0:
        return 1.0
    if np_pred == 0 or np_gt == 0:
        return 0.0
    disk = _disk(tol)
    gt_zone = ndimage.binary_dilation(gb, structure=disk)
    pred_zone = ndimage.binary_dilation(pb, structure=disk)
    precision = int(np.count_nonzero(pb & gt_zone)) / np_pred
    recall = int(np.count_nonzero(gb & pred_zone)) / np_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def boundary_accuracy(
    track: Track, gt_object: Sequence[Mask], tol: int
) -> tuple[list[float], float]:
    """Per-frame boundary F-measure and its mean over interior frames."""
    if tol < 0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    if track.length != len(gt_object):
        raise ValueError(f"track covers {track.length} frames, ground truth {len(gt_object)}")
    values = [boundary_f_frame(m, g, tol) for m, g in zip(track.masks, gt_object)]
    return values, float(np.mean(_interior(values)))


def recall_and_decay(per_frame_values: Sequence[float]) -> tuple[float, float]:
    """Recall: fraction of values strictly above 0.5.  Decay: first quarter
    mean minus last quarter mean over four equal time bins; short sequences
    degrade to first minus last value."""
    if len(per_frame_values) == 0:
        raise ValueError("need at least one per-frame value")
    values = np.asarray(per_frame_values, dtype=float)
    recall = float(np.count_nonzero(values > 0.5)) / len(values)
    bins = [b for b in np.array_split(values, 4) if b.size]
    decay = float(bins[0].mean() - bins[-1].mean())
    return recall, decay


def match_tracks(pred: SequenceSet, gt: GroundTruth) -> dict[int, int | None]:
    """Assign predicted tracks to ground-truth objects, one to one.

    Maximizes the summed J&F mean over matched pairs (Hungarian algorithm);
    leftover objects on either side stay unmatched and score zero.  Returns
    {gt_label: track index or None}.
    """
    m = gt.object_count
    n = pred.count
    assignment: dict[int, int | None] = {label: None for label in range(1, m + 1)}
    if m == 0 or n == 0:
        return assignment
    tol = default_boundary_tolerance(gt.grid)
    score = np.zeros((m, n))
    for gi in range(m):
        gt_masks = gt.object_masks(gi + 1)
        for pi, track in enumerate(pred.tracks):
            _, j = region_similarity(track, gt_masks)
            _, f = boundary_accuracy(track, gt_masks, tol)
            score[gi, pi] = (j + f) / 2.0
    rows, cols = linear_sum_assignment(-score)
    for gi, pi in zip(rows, cols):
        assignment[gi + 1] = int(pi)
    return assignment


def proposal_miou(proposals: Sequence, gt_slices: dict[int, np.ndarray]) -> float:
    """Quality of key frame proposals: mean over (object, key frame) pairs of
    the best proposal IoU.

    ``proposals`` holds objects with .mask and .key_frame; ``gt_slices`` maps
    key frame id to its label map.  Objects absent from a key frame are
    skipped; an object with no proposal at its key frame contributes 0.
    Returns 0.0 when no object appears on any key frame.
    """
    by_frame: dict[int, list] = {}
    for prop in proposals:
        by_frame.setdefault(prop.key_frame, []).append(prop)
    total = 0.0
    pairs = 0
    for frame, label_map in sorted(gt_slices.items()):
        label_map = np.asarray(label_map)
        h, w = label_map.shape
        grid = GridShape(h, w)
        for label in range(1, int(label_map.max()) + 1):
            gt_mask = Mask(grid, label_map == label)
            if not gt_mask.pixels.any():
                continue
            pairs += 1
            best = 0.0
            for prop in by_frame.get(frame, ()):
                inter = int(np.count_nonzero(prop.mask.pixels & gt_mask.pixels))
                union = int(np.count_nonzero(prop.mask.pixels | gt_mask.pixels))
                if union and inter / union > best:
                    best = inter / union
            total += best
    if pairs == 0:
        return 0.0
    return total / pairs
