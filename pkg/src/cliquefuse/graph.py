"""Proposal graph over one key frame: IoU edges, maximal cliques, voting.

Proposals propagated to a key frame become vertices; an edge joins two
vertices when the IoU of their masks (binarized at 0.5) strictly exceeds t0.
Maximal cliques of that graph are treated as groups of proposals depicting
one object, and each clique votes a fused proposal: the member probability
masks are averaged with a fixed divisor (the clip size H, so small cliques
are penalized) and thresholded at t1.  Tiny results are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .config import PipelineConfig
from .keyframes import KeyFrameClip
from .masks import Mask, ProbMask, area, average, binarize, iou
from .propagation import (
    PropagatedProposal,
    PropagationError,
    Propagator,
    PropagatorSpec,
    Proposal,
    VideoFrames,
    make_propagator,
    propagate,
)

EDGE_BINARIZE_THRESHOLD = 0.5


@dataclass(frozen=True)
class MPGraph:
    vertices: tuple[PropagatedProposal, ...]
    edges: frozenset[tuple[int, int]]
    iou_threshold: float
    edge_ious: Mapping[tuple[int, int], float]


@dataclass(frozen=True)
class Clique:
    members: tuple[int, ...]

    def __post_init__(self):
        if tuple(sorted(set(self.members))) != self.members:
            raise ValueError("clique members must be sorted and unique")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class KeyFrameProposal:
    mask: Mask
    vote: ProbMask
    clique: Clique
    key_frame: int


def build_graph(props: Sequence[PropagatedProposal], t0: float) -> MPGraph:
    """Connect propagated proposals whose binarized-mask IoU strictly exceeds t0."""
    if not 0.0 <= t0 <= 1.0:
        raise ValueError(f"t0 must be in [0, 1], got {t0}")
    masks = [binarize(p.prob, EDGE_BINARIZE_THRESHOLD) for p in props]
    edges = set()
    ious = {}
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            value = iou(masks[i], masks[j])
            if value > t0:
                edges.add((i, j))
                ious[(i, j)] = value
    return MPGraph(tuple(props), frozenset(edges), t0, ious)


def maximal_cliques(graph: MPGraph) -> list[Clique]:
    """Enumerate every maximal clique exactly once, in canonical order.

    Bron-Kerbosch over a degeneracy ordering of the vertices, with pivoting
    inside the recursion; isolated vertices come out as singleton cliques.
    Output is sorted by member tuple, so it only depends on the graph.
    """
    n = len(graph.vertices)
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for i, j in graph.edges:
        neighbors[i].add(j)
        neighbors[j].add(i)

    order = _degeneracy_order(n, neighbors)
    rank = {v: k for k, v in enumerate(order)}
    found: list[tuple[int, ...]] = []

    def expand(partial: list[int], candidates: set[int], excluded: set[int]):
        if not candidates and not excluded:
            found.append(tuple(sorted(partial)))
            return
        pivot = max(candidates | excluded, key=lambda u: len(candidates & neighbors[u]))
        for v in sorted(candidates - neighbors[pivot]):
            expand(partial + [v], candidates & neighbors[v], excluded & neighbors[v])
            candidates.discard(v)
            excluded.add(v)

    for v in order:
        later = {u for u in neighbors[v] if rank[u] > rank[v]}
        earlier = {u for u in neighbors[v] if rank[u] < rank[v]}
        expand([v], later, earlier)

    return [Clique(members) for members in sorted(found)]


def _degeneracy_order(n: int, neighbors: list[set[int]]) -> list[int]:
    """Order vertices by repeatedly removing one of minimum remaining degree."""
    degree = {v: len(neighbors[v]) for v in range(n)}
    remaining = set(range(n))
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (degree[u], u))
        order.append(v)
        remaining.discard(v)
        for u in neighbors[v]:
            if u in remaining:
                degree[u] -= 1
    return order


def vote(
    clique: Clique,
    props: Sequence[PropagatedProposal],
    h: int,
    t1: float,
    min_area: int,
    divisor: str = "H",
) -> KeyFrameProposal | None:
    """Fuse one clique into a key frame proposal, or drop it as too small.

    The vote mask averages member probabilities over ``h`` (not the clique
    size) unless divisor "n" is selected, then binarizes at t1 inclusively.
    """
    if divisor not in ("H", "n"):
        raise ValueError(f"divisor must be 'H' or 'n', got {divisor!r}")
    if clique.size == 0:
        return None
    if clique.members[-1] >= len(props):
        raise ValueError("clique indexes past the proposal list")
    # Cliques larger than h can occur when one frame holds near-duplicate
    # proposals; the fixed-divisor average then saturates at 1 per pixel.
    denom = h if divisor == "H" else clique.size
    voted = average([props[i].prob for i in clique.members], denom)
    mask = binarize(voted, t1)
    if area(mask) < min_area:
        return None
    return KeyFrameProposal(
        mask=mask, vote=voted, clique=clique, key_frame=props[clique.members[0]].target_frame
    )


def collect_clip(
    clip: KeyFrameClip,
    proposals_by_frame: Mapping[int, Sequence[Proposal]],
    spec: PropagatorSpec,
    video: VideoFrames,
    propagator: Propagator | None = None,
) -> list[PropagatedProposal]:
    """Propagate every clip frame's proposals to the key frame, in clip order."""
    owned = propagator is None
    prop = make_propagator(spec) if owned else propagator
    propagated: list[PropagatedProposal] = []
    try:
        for frame in clip.members:
            for proposal in proposals_by_frame.get(frame, ()):
                try:
                    propagated.append(
                        propagate(spec, video, proposal, clip.key_frame, prop)
                    )
                except PropagationError as exc:
                    raise PropagationError(
                        f"key frame {clip.key_frame}, frame {frame}, "
                        f"proposal {proposal.proposal_id}: {exc}"
                    ) from exc
    finally:
        if owned:
            prop.close()
    return propagated


def refine_keyframe(
    clip: KeyFrameClip,
    proposals_by_frame: Mapping[int, Sequence[Proposal]],
    spec: PropagatorSpec,
    video: VideoFrames,
    cfg: PipelineConfig,
    propagator: Propagator | None = None,
) -> list[KeyFrameProposal]:
    """Stage 1 for one key frame: propagate the clip, build, enumerate, vote.

    Proposals are gathered frame by frame in clip order, propagated to the
    key frame, connected into the IoU graph, and every maximal clique votes.
    Exact-duplicate masks are dropped, first occurrence kept; overlapping
    near-duplicates survive here and are resolved later by sequence NMS.
    """
    propagated = collect_clip(clip, proposals_by_frame, spec, video, propagator)
    graph = build_graph(propagated, cfg.t0)
    refined: list[KeyFrameProposal] = []
    seen: set[Mask] = set()
    for clique in maximal_cliques(graph):
        result = vote(
            clique, propagated, cfg.clip_size, cfg.t1, cfg.min_area, cfg.vote_divisor
        )
        if result is not None and result.mask not in seen:
            seen.add(result.mask)
            refined.append(result)
    return refined


def to_dot(graph: MPGraph) -> str:
    """DOT text for inspection: vertices labeled by origin, edges by IoU."""
    lines = ["graph proposals {"]
    for i, v in enumerate(graph.vertices):
        lines.append(f'  v{i} [label="f{v.origin_frame}/p{v.origin}"];')
    for i, j in sorted(graph.edges):
        lines.append(f'  v{i} -- v{j} [label="{graph.edge_ious[(i, j)]:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
