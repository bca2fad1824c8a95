"""Object sequences: scoring against raw detections, sequence IoU, NMS, label maps.

A track carries one mask per frame for one candidate object.  Its score is the
per-frame best IoU-weighted objectness against the original detections, so no
objectness is ever recomputed for merged masks.  Duplicate tracks discovered
from different key frames are removed by greedy NMS on spatio-temporal IoU
(sum of per-frame intersections over sum of per-frame unions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .masks import Mask, binarize, iou

if TYPE_CHECKING:
    from .propagation import Proposal


@dataclass(frozen=True)
class Track:
    track_id: int
    key_frame: int
    masks: tuple[Mask, ...]
    score: float = 0.0

    def __post_init__(self):
        if not self.masks:
            raise ValueError("track must cover at least one frame")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"track score must be in [0, 1], got {self.score}")

    @property
    def length(self) -> int:
        return len(self.masks)


@dataclass(frozen=True)
class SequenceSet:
    tracks: tuple[Track, ...]

    @property
    def count(self) -> int:
        return len(self.tracks)


DETECTION_BINARIZE_THRESHOLD = 0.5


def sequence_score(track: Track, detections: Sequence[Sequence["Proposal"]]) -> float:
    """Mean over frames of the best IoU * objectness match among that frame's detections.

    Frames with no detections contribute 0.  Detection probability masks are
    binarized at 0.5 before the IoU, the same convention used for graph edges.
    """
    if len(detections) != track.length:
        raise ValueError(
            f"track covers {track.length} frames but detections cover {len(detections)}"
        )
    total = 0.0
    for t in range(track.length):
        best = 0.0
        for det in detections[t]:
            value = iou(track.masks[t], binarize(det.prob, DETECTION_BINARIZE_THRESHOLD))
            value *= det.objectness
            if value > best:
                best = value
        total += best
    return total / track.length


def sequence_iou(a: Track, b: Track) -> float:
    """Spatio-temporal IoU: summed per-frame intersections over summed unions."""
    if a.length != b.length:
        raise ValueError(f"tracks cover {a.length} vs {b.length} frames")
    inter = 0
    union = 0
    for ma, mb in zip(a.masks, b.masks):
        if ma.shape != mb.shape:
            raise ValueError(f"tracks on different grids: {ma.shape} vs {mb.shape}")
        inter += int(np.count_nonzero(ma.pixels & mb.pixels))
        union += int(np.count_nonzero(ma.pixels | mb.pixels))
    if union == 0:
        return 0.0
    return inter / union


def sequence_nms(seqs: SequenceSet, threshold: float) -> SequenceSet:
    """Greedy NMS: keep the best remaining track, drop everything overlapping it.

    A track is dropped when its sequence IoU with a kept track exceeds the
    threshold (strictly).  Ordering is by descending score with ties broken by
    the smaller track id, which makes the result independent of input order.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"NMS threshold must be in [0, 1], got {threshold}")
    remaining = sorted(seqs.tracks, key=lambda t: (-t.score, t.track_id))
    kept: list[Track] = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [t for t in remaining if sequence_iou(best, t) <= threshold]
    return SequenceSet(tuple(kept))


def render_labels(seqs: SequenceSet, top_m: int | None = None) -> list[np.ndarray]:
    """Single-label maps, one uint8 array per frame; 0 is background.

    Tracks rank by descending score (ties to the smaller track id) and take
    labels 1, 2, ... in that order; where masks overlap the better-ranked
    track claims the pixel.  ``top_m`` caps the number of rendered tracks.
    """
    ranked = sorted(seqs.tracks, key=lambda t: (-t.score, t.track_id))
    if top_m is not None:
        ranked = ranked[: max(top_m, 0)]
    if len(ranked) > 255:
        raise ValueError(f"cannot render {len(ranked)} tracks into 8-bit labels")
    if not ranked:
        return []
    length = ranked[0].length
    shape = ranked[0].masks[0].shape
    frames = []
    for t in range(length):
        label_map = np.zeros((shape.height, shape.width), dtype=np.uint8)
        for rank in range(len(ranked) - 1, -1, -1):
            label_map[ranked[rank].masks[t].pixels] = rank + 1
        frames.append(label_map)
    return frames
