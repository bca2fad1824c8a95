import itertools

import numpy as np
import pytest

from cliquefuse.config import PipelineConfig
from cliquefuse.graph import (
    Clique,
    MPGraph,
    build_graph,
    maximal_cliques,
    refine_keyframe,
    to_dot,
    vote,
)
from cliquefuse.keyframes import build_clip
from cliquefuse.masks import Mask, ProbMask, binarize, iou
from cliquefuse.propagation import (
    PropagatedProposal,
    PropagatorSpec,
    Proposal,
    VideoFrames,
)

GRID = (12, 12)


def levels_prob(regions):
    """ProbMask from (top, left, h, w, level) rectangles painted in order."""
    arr = np.zeros(GRID, dtype=np.uint8)
    for top, left, h, w, level in regions:
        arr[top : top + h, left : left + w] = level
    return ProbMask(GRID, arr)


def vertex(prob, frame=0, origin=0):
    return PropagatedProposal(origin_frame=frame, target_frame=0, prob=prob, origin=origin)


def index_graph(n, edges):
    """Graph over dummy vertices for clique-algorithm tests."""
    return MPGraph(tuple(range(n)), frozenset(edges), 0.5, {})


def brute_force_maximal_cliques(n, edges):
    adjacent = set()
    for i, j in edges:
        adjacent.add((i, j))
        adjacent.add((j, i))
    cliques = []
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            if all((a, b) in adjacent for a, b in itertools.combinations(subset, 2)):
                cliques.append(set(subset))
    maximal = [c for c in cliques if not any(c < d for d in cliques)]
    return sorted(tuple(sorted(c)) for c in maximal)


# --- graph construction ------------------------------------------------------


def test_build_graph_identical_pair():
    p = levels_prob([(2, 2, 4, 4, 255)])
    g = build_graph([vertex(p), vertex(p, origin=1)], 0.5)
    assert g.edges == {(0, 1)}
    assert g.edge_ious[(0, 1)] == 1.0


def test_build_graph_disjoint_pair():
    a = levels_prob([(0, 0, 3, 3, 255)])
    b = levels_prob([(6, 6, 3, 3, 255)])
    g = build_graph([vertex(a), vertex(b, origin=1)], 0.5)
    assert g.edges == frozenset()


def test_build_graph_path_from_sliding_strips():
    # Width-4 strips stepping right by 1: adjacent IoU 15/25 = 0.6, the far
    # pair only 10/30, so threshold 0.5 yields the path 0 - 1 - 2.
    strips = [levels_prob([(0, left, 5, 4, 255)]) for left in (0, 1, 2)]
    g = build_graph([vertex(p, origin=i) for i, p in enumerate(strips)], 0.5)
    assert g.edges == {(0, 1), (1, 2)}
    assert g.edge_ious[(0, 1)] == pytest.approx(0.6)
    assert g.edge_ious[(1, 2)] == pytest.approx(0.6)


def test_build_graph_threshold_is_strict():
    # IoU exactly 0.6 must not create an edge at t0 = 0.6.
    strips = [levels_prob([(0, left, 5, 4, 255)]) for left in (0, 1)]
    g = build_graph([vertex(p, origin=i) for i, p in enumerate(strips)], 0.6)
    assert g.edges == frozenset()


def test_build_graph_uses_half_binarization():
    # Levels below one half vanish before the IoU test.
    soft = levels_prob([(2, 2, 4, 4, 100)])
    hard = levels_prob([(2, 2, 4, 4, 255)])
    g = build_graph([vertex(soft), vertex(hard, origin=1)], 0.1)
    assert g.edges == frozenset()


def test_build_graph_edge_soundness_random():
    rng = np.random.default_rng(77)
    t0 = 0.3
    probs = [
        ProbMask(GRID, (rng.random(GRID) < 0.5).astype(np.uint8) * 255) for _ in range(6)
    ]
    g = build_graph([vertex(p, origin=i) for i, p in enumerate(probs)], t0)
    masks = [binarize(p, 0.5) for p in probs]
    for i in range(6):
        for j in range(i + 1, 6):
            value = iou(masks[i], masks[j])
            assert ((i, j) in g.edges) == (value > t0)


# --- maximal cliques ---------------------------------------------------------


def test_cliques_triangle():
    assert maximal_cliques(index_graph(3, [(0, 1), (0, 2), (1, 2)])) == [Clique((0, 1, 2))]


def test_cliques_path():
    assert maximal_cliques(index_graph(3, [(0, 1), (1, 2)])) == [
        Clique((0, 1)),
        Clique((1, 2)),
    ]


def test_cliques_isolated_vertices():
    assert maximal_cliques(index_graph(3, [])) == [Clique((0,)), Clique((1,)), Clique((2,))]


def test_cliques_empty_graph():
    assert maximal_cliques(index_graph(0, [])) == []


def test_cliques_two_triangles_sharing_a_vertex():
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)]
    assert maximal_cliques(index_graph(5, edges)) == [Clique((0, 1, 2)), Clique((2, 3, 4))]


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("density", [0.15, 0.5, 0.85])
def test_cliques_match_brute_force(seed, density):
    rng = np.random.default_rng([seed, int(density * 100)])
    n = int(rng.integers(1, 11))
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    ]
    result = maximal_cliques(index_graph(n, edges))
    assert [c.members for c in result] == brute_force_maximal_cliques(n, edges)


def test_cliques_are_complete_and_maximal():
    rng = np.random.default_rng(5)
    n = 9
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
    adjacent = {frozenset(e) for e in edges}
    for clique in maximal_cliques(index_graph(n, edges)):
        members = set(clique.members)
        for a, b in itertools.combinations(members, 2):
            assert frozenset((a, b)) in adjacent
        for outside in set(range(n)) - members:
            assert not all(frozenset((outside, m)) in adjacent for m in members)


def test_clique_members_must_be_canonical():
    with pytest.raises(ValueError):
        Clique((2, 1))
    with pytest.raises(ValueError):
        Clique((1, 1, 2))


# --- clique voting -----------------------------------------------------------


def test_vote_two_members_over_clip_of_three():
    region = (2, 2, 4, 4)
    a = vertex(levels_prob([region + (230,)]))  # 0.9
    b = vertex(levels_prob([region + (153,)]), origin=1)  # 0.6
    result = vote(Clique((0, 1)), [a, b], h=3, t1=0.2, min_area=10)
    assert result is not None
    # (0.9 + 0.6) / 3 = 0.5 on the region, zero elsewhere.
    assert result.vote.levels[3, 3] == 128
    expected = binarize(levels_prob([region + (255,)]), 0.5)
    assert result.mask == expected


def test_vote_lone_weak_member_is_dropped():
    # A single 0.5 proposal averaged over a 3-clip falls below 0.2.
    a = vertex(levels_prob([(2, 2, 4, 4, 128)]))
    assert vote(Clique((0,)), [a], h=3, t1=0.2, min_area=10) is None


def test_vote_divisor_one_is_binarize():
    a = vertex(levels_prob([(2, 2, 4, 4, 128), (7, 7, 3, 3, 40)]))
    result = vote(Clique((0,)), [a], h=1, t1=0.2, min_area=1)
    assert result.mask == binarize(a.prob, 0.2)


def test_vote_full_clique_of_identical_members_is_binarize():
    a = levels_prob([(2, 2, 4, 4, 180)])
    props = [vertex(a, origin=i) for i in range(3)]
    result = vote(Clique((0, 1, 2)), props, h=3, t1=0.2, min_area=1)
    assert result.mask == binarize(a, 0.2)
    assert result.vote == a


def test_vote_divisor_n_uses_clique_size():
    a = vertex(levels_prob([(2, 2, 4, 4, 128)]))
    result = vote(Clique((0,)), [a], h=3, t1=0.2, min_area=10, divisor="n")
    assert result is not None
    assert result.mask == binarize(a.prob, 0.5)


def test_vote_min_area_filter():
    a = vertex(levels_prob([(2, 2, 2, 2, 255)]))
    assert vote(Clique((0,)), [a], h=1, t1=0.2, min_area=10) is None
    kept = vote(Clique((0,)), [a], h=1, t1=0.2, min_area=4)
    assert kept is not None


def test_vote_monotone_in_members():
    rng = np.random.default_rng(12)
    props = [
        vertex(ProbMask(GRID, rng.integers(0, 256, GRID, dtype=np.uint8)), origin=i)
        for i in range(3)
    ]
    small = vote(Clique((0, 1)), props, h=3, t1=0.0, min_area=0)
    big = vote(Clique((0, 1, 2)), props, h=3, t1=0.0, min_area=0)
    assert (big.vote.levels >= small.vote.levels).all()


def test_vote_oversized_clique_saturates():
    a = levels_prob([(2, 2, 4, 4, 255)])
    props = [vertex(a, origin=i) for i in range(5)]
    result = vote(Clique((0, 1, 2, 3, 4)), props, h=3, t1=0.2, min_area=1)
    assert result.mask == binarize(a, 0.5)
    assert result.vote.levels[3, 3] == 255


def test_vote_rejects_bad_indices():
    a = vertex(levels_prob([(2, 2, 4, 4, 255)]))
    with pytest.raises(ValueError, match="indexes past"):
        vote(Clique((0, 3)), [a], h=3, t1=0.2, min_area=1)
    with pytest.raises(ValueError, match="divisor"):
        vote(Clique((0,)), [a], h=3, t1=0.2, min_area=1, divisor="x")


# --- keyframe refinement -----------------------------------------------------


def one_frame_video():
    return VideoFrames("v", GRID, 1)


def test_refine_single_proposal_round_trip():
    prob = levels_prob([(2, 2, 5, 5, 255)])
    cfg = PipelineConfig()
    spec = PropagatorSpec("identity")
    clip = build_clip(0, 1, 1)
    out = refine_keyframe(clip, {0: [Proposal(0, prob, 0.9)]}, spec, one_frame_video(), cfg)
    assert len(out) == 1
    # One member over divisor 3: level 85 still clears the 0.2 vote threshold.
    assert out[0].mask == binarize(prob, 0.5)
    assert out[0].clique == Clique((0,))
    assert out[0].key_frame == 0


def test_refine_empty_clip():
    cfg = PipelineConfig()
    spec = PropagatorSpec("identity")
    clip = build_clip(0, 3, 5)
    assert refine_keyframe(clip, {}, spec, VideoFrames("v", GRID, 5), cfg) == []


def test_refine_fuses_complementary_holes():
    # Same rectangle on three frames, each copy missing a different pixel;
    # the clique vote fills every hole, beating each input's IoU.
    full = np.zeros(GRID, dtype=np.uint8)
    full[3:8, 3:8] = 255
    holes = [(4, 4), (6, 5), (5, 6)]
    proposals = {}
    for frame, hole in enumerate(holes):
        levels = full.copy()
        levels[hole] = 0
        proposals[frame] = [Proposal(frame, ProbMask(GRID, levels), 0.9)]
    cfg = PipelineConfig()
    spec = PropagatorSpec("identity")
    clip = build_clip(1, 3, 3)
    out = refine_keyframe(clip, proposals, spec, VideoFrames("v", GRID, 3), cfg)
    assert len(out) == 1
    target = Mask(GRID, full > 0)
    fused_iou = iou(out[0].mask, target)
    assert fused_iou == 1.0
    for frame in range(3):
        single = binarize(proposals[frame][0].prob, 0.5)
        assert iou(single, target) < fused_iou


def test_refine_drops_duplicate_masks():
    # Two disconnected vertices whose singleton votes binarize identically:
    # one hard square, one square with a weak interior that 0.2 still admits.
    hard = levels_prob([(3, 3, 5, 5, 255)])
    weak = levels_prob([(3, 3, 5, 5, 255), (5, 3, 3, 5, 100)])
    cfg = PipelineConfig(clip_size=1)
    spec = PropagatorSpec("identity")
    clip = build_clip(0, 1, 1)
    graph_masks = [binarize(p, 0.5) for p in (hard, weak)]
    assert iou(graph_masks[0], graph_masks[1]) <= cfg.t0  # no edge, two cliques
    out = refine_keyframe(
        clip,
        {0: [Proposal(0, hard, 0.9), Proposal(0, weak, 0.8, proposal_id=1)]},
        spec,
        one_frame_video(),
        cfg,
    )
    assert len(out) == 1
    assert out[0].mask == binarize(hard, 0.2)


def test_refine_output_is_order_independent():
    rng = np.random.default_rng(31)
    probs = [
        ProbMask(GRID, (rng.random(GRID) < 0.45).astype(np.uint8) * 255)
        for _ in range(4)
    ]
    cfg = PipelineConfig(min_area=1)
    spec = PropagatorSpec("identity")
    clip = build_clip(0, 1, 1)

    def run(order):
        plist = [Proposal(0, probs[i], 0.9, proposal_id=i) for i in order]
        out = refine_keyframe(clip, {0: plist}, spec, one_frame_video(), cfg)
        return {p.mask for p in out}

    assert run([0, 1, 2, 3]) == run([3, 1, 0, 2])


# --- inspection --------------------------------------------------------------


def test_to_dot_lists_vertices_and_edges():
    p = levels_prob([(2, 2, 4, 4, 255)])
    q = levels_prob([(2, 3, 4, 4, 255)])
    g = build_graph([vertex(p, frame=1, origin=4), vertex(q, frame=2, origin=7)], 0.3)
    text = to_dot(g)
    assert 'v0 [label="f1/p4"];' in text
    assert 'v1 [label="f2/p7"];' in text
    assert "v0 -- v1" in text
    assert text.startswith("graph proposals {")
    assert text.endswith("}\n")
