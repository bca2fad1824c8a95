"""Two-stage orchestration: refine key frames, then track, score, and filter.

Stage 1 produces refined proposals per key frame (or passes the key frame's
raw detections through when the graph stage is disabled).  Stage 2 tracks
every refined proposal bidirectionally, scores each track against the
original detections, removes duplicates with sequence NMS, and renders
single-label maps.

Parallelism never changes results: key frames and videos are dispatched to
a bounded thread pool but merged in canonical index order, and all file
writes go through atomic replace.  A propagation failure on one key frame
is recorded and the run continues with the remaining key frames.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .graph import Clique, KeyFrameProposal, refine_keyframe
from .keyframes import build_clip, select_keyframes
from .manifest import InputError, VideoManifest, load_manifest
from .masks import GridShape, Mask, area, binarize
from .outputs import (
    atomic_write_text,
    load_ground_truth_dir,
    load_sequences_json,
    write_label_frames,
    write_sequences_json,
)
from .propagation import (
    PropagationError,
    Propagator,
    PropagatorSpec,
    make_propagator,
    track_bidirectional,
)
from .report import aggregate, evaluate_video, write_curve_figures, write_report
from .sequences import SequenceSet, render_labels, sequence_nms, sequence_score

logger = logging.getLogger("cliquefuse")

RAW_BINARIZE_THRESHOLD = 0.5


@dataclass
class VideoResult:
    video_id: str
    sequences: SequenceSet
    labels: list[np.ndarray]
    refined: dict[int, list[KeyFrameProposal]]
    keyframe_failures: list[str]


def effective_propagator(cfg: PipelineConfig) -> PropagatorSpec:
    """The run seed shifts the noisy propagator's stream; other kinds ignore it."""
    spec = cfg.propagator
    if spec.kind == "noisy" and cfg.seed:
        spec = dataclasses.replace(spec, seed=spec.seed + cfg.seed)
    return spec


def _raw_keyframe_proposals(
    manifest: VideoManifest, key_frame: int, cfg: PipelineConfig
) -> list[KeyFrameProposal]:
    """Graph-free baseline: the key frame's own detections, binarized."""
    out: list[KeyFrameProposal] = []
    seen: set[Mask] = set()
    for index, prop in enumerate(manifest.per_frame[key_frame]):
        mask = binarize(prop.prob, RAW_BINARIZE_THRESHOLD)
        if area(mask) < cfg.min_area or mask in seen:
            continue
        seen.add(mask)
        out.append(
            KeyFrameProposal(
                mask=mask, vote=prop.prob, clique=Clique((index,)), key_frame=key_frame
            )
        )
    return out


def refine_all_keyframes(
    cfg: PipelineConfig,
    manifest: VideoManifest,
    workers: int = 1,
    propagator: Propagator | None = None,
) -> tuple[dict[int, list[KeyFrameProposal]], list[str]]:
    """Stage 1 over every key frame; failures are collected, not raised."""
    video = manifest.video
    keyframes = select_keyframes(video.frame_count, cfg.keyframes)
    if len(keyframes) < cfg.keyframes:
        logger.warning(
            "%s: %d key frames requested, %d frames available; using %s",
            video.video_id,
            cfg.keyframes,
            video.frame_count,
            keyframes,
        )
    spec = effective_propagator(cfg)
    by_frame = manifest.detections_by_frame

    def one(key_frame: int):
        if not cfg.mpgraph:
            return key_frame, _raw_keyframe_proposals(manifest, key_frame, cfg), None
        clip = build_clip(key_frame, cfg.clip_size, video.frame_count)
        try:
            return key_frame, refine_keyframe(clip, by_frame, spec, video, cfg, propagator), None
        except PropagationError as exc:
            return key_frame, [], str(exc)

    if workers > 1 and len(keyframes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, keyframes))
    else:
        results = [one(g) for g in keyframes]

    refined: dict[int, list[KeyFrameProposal]] = {}
    failures: list[str] = []
    for key_frame, proposals, error in results:
        refined[key_frame] = proposals
        if error is not None:
            failures.append(error)
            logger.warning("%s: stage 1 failed: %s", video.video_id, error)
    return refined, failures


def run_video(
    cfg: PipelineConfig, manifest: VideoManifest, workers: int | None = None
) -> VideoResult:
    """Both stages for one video; returns tracks, label maps, stage 1 output."""
    video = manifest.video
    workers = cfg.worker_count if workers is None else workers
    spec = effective_propagator(cfg)
    shared = make_propagator(spec) if spec.kind != "plugin" else None
    try:
        refined, failures = refine_all_keyframes(cfg, manifest, workers, shared)

        tracks = []
        next_id = 0
        for key_frame in sorted(refined):
            proposals = refined[key_frame]
            if not proposals:
                continue
            try:
                fresh = track_bidirectional(
                    spec,
                    video,
                    [p.mask for p in proposals],
                    key_frame,
                    first_track_id=next_id,
                    propagator=shared,
                )
            except PropagationError as exc:
                failures.append(f"tracking from key frame {key_frame}: {exc}")
                logger.warning("%s: stage 2 failed: %s", video.video_id, exc)
                continue
            next_id += len(fresh)
            for track in fresh:
                score = sequence_score(track, manifest.per_frame)
                tracks.append(dataclasses.replace(track, score=score))
    finally:
        if shared is not None:
            shared.close()

    sequences = sequence_nms(SequenceSet(tuple(tracks)), cfg.nms_threshold)
    labels = render_labels(sequences, cfg.top_m)
    if not labels:
        blank = np.zeros((video.grid.height, video.grid.width), dtype=np.uint8)
        labels = [blank.copy() for _ in range(video.frame_count)]
    return VideoResult(video.video_id, sequences, labels, refined, failures)


def refined_to_json(refined: dict[int, list[KeyFrameProposal]]) -> str:
    key_frames = []
    for key_frame in sorted(refined):
        key_frames.append(
            {
                "key_frame": key_frame,
                "proposals": [{"rle": p.mask.to_rle()} for p in refined[key_frame]],
            }
        )
    return json.dumps({"key_frames": key_frames}, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class _StoredProposal:
    mask: Mask
    key_frame: int


def load_refined_json(path: str, grid: GridShape) -> dict[int, list[_StoredProposal]]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    refined: dict[int, list[_StoredProposal]] = {}
    for entry in data["key_frames"]:
        key_frame = int(entry["key_frame"])
        refined[key_frame] = [
            _StoredProposal(Mask.from_rle(grid, p["rle"]), key_frame)
            for p in entry["proposals"]
        ]
    return refined


def write_video_outputs(result: VideoResult, out_dir: str) -> None:
    video_dir = os.path.join(out_dir, result.video_id)
    write_label_frames(result.labels, os.path.join(video_dir, "labels"))
    write_sequences_json(result.sequences, os.path.join(video_dir, "sequences.json"))
    atomic_write_text(os.path.join(video_dir, "refined.json"), refined_to_json(result.refined))


def discover_corpus(corpus_dir: str) -> list[str]:
    if not os.path.isdir(corpus_dir):
        raise InputError(f"corpus directory not found: {corpus_dir}")
    videos = sorted(
        name
        for name in os.listdir(corpus_dir)
        if os.path.isfile(os.path.join(corpus_dir, name, "manifest.json"))
    )
    if not videos:
        raise InputError(f"nothing to evaluate: no */manifest.json under {corpus_dir}")
    return videos


def run_corpus(
    cfg: PipelineConfig, corpus_dir: str, out_dir: str, plots: bool = False
) -> tuple[dict, list[str]]:
    """Run and evaluate every video; returns (report, failed video ids).

    Videos are processed by a pool of cfg.worker_count threads and merged in
    name order, so the report and all per-video files are reproducible for
    any worker count.  A video failure is recorded in the report and the
    remaining videos still run.
    """
    videos = discover_corpus(corpus_dir)

    def one(video_id: str):
        manifest = load_manifest(os.path.join(corpus_dir, video_id, "manifest.json"))
        result = run_video(cfg, manifest, workers=1)
        write_video_outputs(result, out_dir)
        gt_dir = os.path.join(corpus_dir, video_id, "gt")
        entry = None
        curves = None
        if os.path.isdir(gt_dir):
            gt = load_ground_truth_dir(gt_dir)
            entry, curves = evaluate_video(video_id, result.sequences, gt, result.refined)
            if result.keyframe_failures:
                entry["keyframe_failures"] = list(result.keyframe_failures)
        return entry, curves

    outcomes: dict[str, tuple] = {}
    failures: list[dict] = []
    if cfg.worker_count > 1 and len(videos) > 1:
        with ThreadPoolExecutor(max_workers=cfg.worker_count) as pool:
            futures = {vid: pool.submit(one, vid) for vid in videos}
            for vid in videos:
                try:
                    outcomes[vid] = futures[vid].result()
                except (InputError, PropagationError, ValueError, OSError) as exc:
                    logger.error("%s: failed: %s", vid, exc)
                    failures.append({"video_id": vid, "error": str(exc)})
    else:
        for vid in videos:
            try:
                outcomes[vid] = one(vid)
            except (InputError, PropagationError, ValueError, OSError) as exc:
                logger.error("%s: failed: %s", vid, exc)
                failures.append({"video_id": vid, "error": str(exc)})

    entries = [entry for entry, _ in outcomes.values() if entry is not None]
    report = aggregate(entries, failures)
    write_report(report, out_dir)
    if plots:
        curves_by_video = {
            vid: curves for vid, (entry, curves) in outcomes.items() if curves is not None
        }
        write_curve_figures(curves_by_video, out_dir)
    return report, [f["video_id"] for f in failures]


def eval_corpus(
    corpus_dir: str, results_dir: str, out_dir: str, plots: bool = False
) -> tuple[dict, list[str]]:
    """Score existing run outputs against corpus ground truth."""
    videos = discover_corpus(corpus_dir)
    entries = []
    failures: list[dict] = []
    curves_by_video: dict[str, dict[int, list[float]]] = {}
    for vid in videos:
        try:
            manifest = load_manifest(
                os.path.join(corpus_dir, vid, "manifest.json"), check_frames=False
            )
            gt = load_ground_truth_dir(os.path.join(corpus_dir, vid, "gt"))
            seq_path = os.path.join(results_dir, vid, "sequences.json")
            if not os.path.isfile(seq_path):
                raise InputError(f"missing results for {vid}: {seq_path}")
            sequences = load_sequences_json(seq_path, manifest.video.grid)
            refined_path = os.path.join(results_dir, vid, "refined.json")
            refined = (
                load_refined_json(refined_path, manifest.video.grid)
                if os.path.isfile(refined_path)
                else None
            )
            entry, curves = evaluate_video(vid, sequences, gt, refined)
            entries.append(entry)
            curves_by_video[vid] = curves
        except (InputError, ValueError, OSError, KeyError) as exc:
            logger.error("%s: evaluation failed: %s", vid, exc)
            failures.append({"video_id": vid, "error": str(exc)})
    report = aggregate(entries, failures)
    write_report(report, out_dir)
    if plots:
        write_curve_figures(curves_by_video, out_dir)
    return report, [f["video_id"] for f in failures]
