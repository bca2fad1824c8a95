import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def make_frames(tmp_path):
    """Create a frames directory of flat gray PNGs and return its path."""

    def build(count, height, width, name="frames"):
        frames_dir = tmp_path / name
        frames_dir.mkdir()
        for index in range(count):
            Image.new("L", (width, height), 80).save(frames_dir / f"{index:05d}.png")
        return frames_dir

    return build


def coco_counts(pixels):
    """Column-major background-first counts for a boolean array."""
    flat = np.asarray(pixels, dtype=bool).reshape(-1, order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts
