"""Key frame selection at fixed intervals plus the local clip around each key frame."""

from __future__ import annotations

from dataclasses import dataclass


def select_keyframes(frame_count: int, k: int) -> list[int]:
    """Evenly spaced key frames starting at frame 0.

    Candidates are ``i * max(frame_count // k, 1)`` for ``i`` in ``0..k-1``;
    candidates past the last frame are dropped (they would only duplicate
    earlier key frames after clamping).
    """
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    if k < 1:
        raise ValueError(f"key frame count must be >= 1, got {k}")
    interval = max(frame_count // k, 1)
    seen = set()
    frames = []
    for i in range(k):
        g = i * interval
        if g >= frame_count or g in seen:
            continue
        seen.add(g)
        frames.append(g)
    return frames


@dataclass(frozen=True)
class KeyFrameClip:
    """A key frame and its window of neighboring frames, clamped to the video."""

    key_frame: int
    members: tuple[int, ...]
    window: int

    def __post_init__(self):
        if self.key_frame not in self.members:
            raise ValueError("clip must contain its key frame")


def build_clip(key_frame: int, window: int, frame_count: int) -> KeyFrameClip:
    """Window of size ``window`` centered on the key frame, truncated at video ends.

    ``window`` must be odd so the clip is symmetric around the key frame.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"clip window must be odd and >= 1, got {window}")
    if not 0 <= key_frame < frame_count:
        raise ValueError(f"key frame {key_frame} outside video of {frame_count} frames")
    half = (window - 1) // 2
    lo = max(key_frame - half, 0)
    hi = min(key_frame + half, frame_count - 1)
    return KeyFrameClip(key_frame, tuple(range(lo, hi + 1)), window)
