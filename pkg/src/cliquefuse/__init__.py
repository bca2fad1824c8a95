"""Proposal fusion and tracking for unsupervised video object segmentation.

Noisy per-frame instance proposals are propagated to key frames, connected
into an IoU graph, grouped by maximal cliques, fused by voting, tracked
bidirectionally through the video, scored against the raw detections, and
deduplicated with sequence NMS.
"""

from .config import ConfigError, PipelineConfig
from .keyframes import KeyFrameClip, build_clip, select_keyframes
from .manifest import InputError, VideoManifest, load_manifest
from .masks import (
    GridShape,
    Mask,
    ProbMask,
    ShapeMismatch,
    area,
    average,
    binarize,
    boundary,
    iou,
)
from .metrics import GroundTruth
from .pipeline import VideoResult, run_corpus, run_video
from .propagation import (
    PropagatedProposal,
    PropagationError,
    Propagator,
    PropagatorSpec,
    Proposal,
    VideoFrames,
    propagate,
    track_bidirectional,
)
from .sequences import SequenceSet, Track
from .synth import NoiseSpec, SceneSpec, corrupt, render_scene

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GridShape",
    "GroundTruth",
    "InputError",
    "KeyFrameClip",
    "Mask",
    "NoiseSpec",
    "PipelineConfig",
    "ProbMask",
    "PropagatedProposal",
    "PropagationError",
    "Propagator",
    "PropagatorSpec",
    "Proposal",
    "SceneSpec",
    "SequenceSet",
    "ShapeMismatch",
    "Track",
    "VideoFrames",
    "VideoManifest",
    "VideoResult",
    "area",
    "average",
    "binarize",
    "boundary",
    "build_clip",
    "corrupt",
    "iou",
    "load_manifest",
    "propagate",
    "render_scene",
    "run_corpus",
    "run_video",
    "select_keyframes",
    "track_bidirectional",
]
