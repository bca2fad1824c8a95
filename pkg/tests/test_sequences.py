import random
from fractions import Fraction

import numpy as np
import pytest

from cliquefuse.masks import Mask, ProbMask
from cliquefuse.propagation import Proposal
from cliquefuse.sequences import (
    SequenceSet,
    Track,
    render_labels,
    sequence_iou,
    sequence_nms,
    sequence_score,
)

GRID = (6, 8)


def flat_mask(start, stop, grid=GRID):
    """Mask covering flat (row-major) pixel indices [start, stop)."""
    px = np.zeros(grid[0] * grid[1], dtype=bool)
    px[start:stop] = True
    return Mask(grid, px.reshape(grid))


def detection(mask, objectness):
    return Proposal(0, ProbMask.from_mask(mask), objectness)


def track(track_id, masks, score=0.0):
    return Track(track_id=track_id, key_frame=0, masks=tuple(masks), score=score)


# --- sequence scoring --------------------------------------------------------


def test_score_single_frame_exact_match():
    m = flat_mask(0, 10)
    t = track(0, [m])
    assert sequence_score(t, [[detection(m, 0.8)]]) == pytest.approx(0.8)


def test_score_no_detections_anywhere():
    t = track(0, [flat_mask(0, 10), flat_mask(0, 10)])
    assert sequence_score(t, [[], []]) == 0.0


def test_score_picks_best_product_per_frame():
    # Frame 0 offers IoU 0.5 at objectness 1.0 against IoU 1.0 at 0.4;
    # frame 1 is a perfect match, so the mean is (0.5 + 1.0) / 2.
    m = flat_mask(0, 4)
    half = flat_mask(0, 8)  # contains m, doubled area -> IoU 0.5
    t = track(0, [m, m])
    dets = [[detection(half, 1.0), detection(m, 0.4)], [detection(m, 1.0)]]
    assert sequence_score(t, dets) == pytest.approx(0.75)


def test_score_length_mismatch():
    t = track(0, [flat_mask(0, 4)])
    with pytest.raises(ValueError, match="frames"):
        sequence_score(t, [[], []])


def test_score_monotone_in_objectness():
    rng = np.random.default_rng(3)
    masks = [Mask(GRID, rng.random(GRID) < 0.4) for _ in range(3)]
    det_masks = [Mask(GRID, rng.random(GRID) < 0.4) for _ in range(3)]
    t = track(0, masks)
    dets_lo = [[detection(m, 0.3)] for m in det_masks]
    dets_hi = [[detection(m, 0.9)] for m in det_masks]
    assert sequence_score(t, dets_hi) >= sequence_score(t, dets_lo)


@pytest.mark.parametrize("seed", range(25))
def test_score_matches_pixel_loop_oracle(seed):
    rng = np.random.default_rng([seed, 99])
    grid = (6, 6)
    frames = int(rng.integers(1, 6))
    masks = [Mask(grid, rng.random(grid) < 0.4) for _ in range(frames)]
    t = track(0, masks)
    dets = []
    for _ in range(frames):
        per_frame = []
        for _ in range(int(rng.integers(0, 5))):
            m = Mask(grid, rng.random(grid) < 0.4)
            per_frame.append(detection(m, float(rng.uniform(0, 1))))
        dets.append(per_frame)

    # Independent re-derivation, counting pixels one by one.
    total = 0.0
    for f in range(frames):
        best = 0.0
        for det in dets[f]:
            inter = union = 0
            for r in range(grid[0]):
                for c in range(grid[1]):
                    a = bool(masks[f].pixels[r, c])
                    b = det.prob.levels[r, c] >= 128
                    inter += a and b
                    union += a or b
            value = (inter / union if union else 0.0) * det.objectness
            best = max(best, value)
        total += best
    assert sequence_score(t, dets) == total / frames

    # And against exact rational arithmetic.
    exact = Fraction(0)
    for f in range(frames):
        candidates = [Fraction(0)]
        for det in dets[f]:
            a = masks[f].pixels
            b = det.prob.levels >= 128
            union = int(np.count_nonzero(a | b))
            inter = int(np.count_nonzero(a & b))
            if union:
                candidates.append(Fraction(inter, union) * Fraction(det.objectness))
        exact += max(candidates)
    assert sequence_score(t, dets) == pytest.approx(float(exact / frames), abs=1e-12)


# --- sequence IoU ------------------------------------------------------------


def test_sequence_iou_identical_and_disjoint():
    a = track(0, [flat_mask(0, 10), flat_mask(5, 15)])
    b = track(1, [flat_mask(20, 30), flat_mask(30, 40)])
    assert sequence_iou(a, a) == 1.0
    assert sequence_iou(a, b) == 0.0


def test_sequence_iou_mixes_frames():
    # Equal on frame 0 (area 4), disjoint on frame 1 (areas 4 and 4): 4 / 12.
    a = track(0, [flat_mask(0, 4), flat_mask(0, 4)])
    b = track(1, [flat_mask(0, 4), flat_mask(10, 14)])
    assert sequence_iou(a, b) == pytest.approx(4 / 12)


def test_sequence_iou_empty_tracks():
    a = track(0, [flat_mask(0, 0), flat_mask(0, 0)])
    assert sequence_iou(a, a) == 0.0


def test_sequence_iou_length_mismatch():
    with pytest.raises(ValueError):
        sequence_iou(track(0, [flat_mask(0, 4)]), track(1, [flat_mask(0, 4)] * 2))


# --- NMS ---------------------------------------------------------------------


def test_nms_prefers_higher_score():
    m = flat_mask(0, 12)
    seqs = SequenceSet((track(0, [m], 0.9), track(1, [m], 0.8)))
    out = sequence_nms(seqs, 0.5)
    assert [t.track_id for t in out.tracks] == [0]


def test_nms_keeps_disjoint_tracks():
    seqs = SequenceSet(
        (
            track(0, [flat_mask(0, 10)], 0.9),
            track(1, [flat_mask(10, 20)], 0.8),
            track(2, [flat_mask(20, 30)], 0.7),
        )
    )
    out = sequence_nms(seqs, 0.5)
    assert [t.track_id for t in out.tracks] == [0, 1, 2]


def test_nms_greedy_trace():
    # Track 1 shadows track 2 (near-duplicates); track 3 lives elsewhere and
    # survives even though it overlaps the already-suppressed track 2.
    a = flat_mask(0, 19)
    b = flat_mask(1, 20)
    c = flat_mask(15, 40)
    seqs = SequenceSet((track(1, [a], 0.9), track(2, [b], 0.8), track(3, [c], 0.7)))
    assert sequence_iou(track(1, [a]), track(2, [b])) > 0.5
    assert sequence_iou(track(1, [a]), track(3, [c])) <= 0.5
    out = sequence_nms(seqs, 0.5)
    assert [t.track_id for t in out.tracks] == [1, 3]


def test_nms_suppression_chain():
    # B overlaps both A and C; once A removes B, C survives.
    a = flat_mask(0, 20)
    b = flat_mask(10, 30)
    c = flat_mask(20, 40)
    seqs = SequenceSet((track(0, [a], 0.9), track(1, [b], 0.8), track(2, [c], 0.7)))
    out = sequence_nms(seqs, 0.3)
    assert [t.track_id for t in out.tracks] == [0, 2]


def test_nms_threshold_is_strict():
    # IoU exactly at the threshold is kept; suppression needs strictly more.
    a = flat_mask(0, 12)
    b = flat_mask(4, 16)
    assert sequence_iou(track(0, [a]), track(1, [b])) == 0.5
    seqs = SequenceSet((track(0, [a], 0.9), track(1, [b], 0.8)))
    out = sequence_nms(seqs, 0.5)
    assert [t.track_id for t in out.tracks] == [0, 1]


def test_nms_tie_breaks_on_track_id():
    m = flat_mask(0, 12)
    seqs = SequenceSet((track(7, [m], 0.5), track(3, [m], 0.5)))
    out = sequence_nms(seqs, 0.5)
    assert [t.track_id for t in out.tracks] == [3]


def test_nms_all_distinct_at_threshold_one():
    rng = np.random.default_rng(8)
    tracks = tuple(
        track(i, [Mask(GRID, rng.random(GRID) < 0.5)], float(rng.uniform(0, 1)))
        for i in range(6)
    )
    out = sequence_nms(SequenceSet(tracks), 1.0)
    assert out.count == 6


@pytest.mark.parametrize("seed", range(10))
def test_nms_output_is_an_antichain_and_order_free(seed):
    rng = np.random.default_rng([seed, 4])
    threshold = float(rng.uniform(0.1, 0.9))
    tracks = [
        track(
            i,
            [Mask(GRID, rng.random(GRID) < 0.5) for _ in range(3)],
            float(rng.integers(0, 100)) / 100.0,
        )
        for i in range(8)
    ]
    out = sequence_nms(SequenceSet(tuple(tracks)), threshold)
    for i, a in enumerate(out.tracks):
        for b in out.tracks[i + 1 :]:
            assert sequence_iou(a, b) <= threshold
    shuffled = tracks[:]
    random.Random(seed).shuffle(shuffled)
    again = sequence_nms(SequenceSet(tuple(shuffled)), threshold)
    assert [t.track_id for t in again.tracks] == [t.track_id for t in out.tracks]


# --- label rendering ---------------------------------------------------------


def test_render_single_track():
    m = flat_mask(0, 10)
    frames = render_labels(SequenceSet((track(0, [m], 0.9),)))
    assert len(frames) == 1
    assert np.array_equal(frames[0] == 1, m.to_array())


def test_render_disjoint_tracks_take_ranked_labels():
    a = flat_mask(0, 10)
    b = flat_mask(20, 30)
    frames = render_labels(SequenceSet((track(5, [a], 0.4), track(9, [b], 0.8))))
    # Higher score ranks first: b becomes label 1, a label 2.
    assert np.array_equal(frames[0] == 1, b.to_array())
    assert np.array_equal(frames[0] == 2, a.to_array())


def test_render_overlap_goes_to_higher_score():
    a = flat_mask(0, 20)
    b = flat_mask(10, 30)
    frames = render_labels(SequenceSet((track(0, [a], 0.9), track(1, [b], 0.7))))
    overlap = flat_mask(10, 20).to_array()
    assert (frames[0][overlap] == 1).all()


def test_render_top_m_cap():
    a = flat_mask(0, 10)
    b = flat_mask(20, 30)
    frames = render_labels(SequenceSet((track(0, [a], 0.9), track(1, [b], 0.8))), top_m=1)
    assert set(np.unique(frames[0])) == {0, 1}


def test_render_empty_set():
    assert render_labels(SequenceSet(())) == []


def test_render_rejects_too_many_tracks():
    m = flat_mask(0, 2)
    tracks = tuple(track(i, [m], 0.5) for i in range(256))
    with pytest.raises(ValueError, match="8-bit"):
        render_labels(SequenceSet(tracks))


# --- track validation --------------------------------------------------------


def test_track_requires_frames_and_valid_score():
    with pytest.raises(ValueError):
        Track(track_id=0, key_frame=0, masks=())
    with pytest.raises(ValueError):
        track(0, [flat_mask(0, 4)], score=1.2)
