"""Command-line surface.

Subcommands:
    run             both stages on a corpus directory or a single manifest
    refine          stage 1 only; writes refined key frame proposals
    eval            score existing outputs against corpus ground truth
    synth generate  render synthetic videos with ground truth and detections
    graph dump      DOT text of the proposal graph at one key frame

Exit codes: 0 success, 2 bad configuration, 3 bad input, 4 partial failure
(some videos or key frames failed while the rest completed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shlex
import sys

from .config import ConfigError, PipelineConfig
from .graph import build_graph, collect_clip, to_dot
from .keyframes import build_clip, select_keyframes
from .manifest import InputError, load_manifest
from .outputs import atomic_write_text
from .pipeline import (
    effective_propagator,
    eval_corpus,
    refine_all_keyframes,
    refined_to_json,
    run_corpus,
    run_video,
    write_video_outputs,
)
from .propagation import PROPAGATOR_KINDS, PropagationError, PropagatorSpec
from .synth import NoiseSpec, generate_video, load_noise_file, load_scene_file

logger = logging.getLogger("cliquefuse")


def _common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--workers", type=int, help="worker thread count")


def _override_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--keyframes", type=int, help="number of key frames (K)")
    parser.add_argument("--clip-size", type=int, help="clip size around a key frame (H, odd)")
    parser.add_argument("--t0", type=float, help="graph edge IoU threshold")
    parser.add_argument("--t1", type=float, help="vote binarization threshold")
    parser.add_argument("--min-area", type=int, help="minimum proposal area in pixels")
    parser.add_argument("--nms-threshold", type=float, help="sequence NMS IoU threshold")
    parser.add_argument("--vote-divisor", choices=("H", "n"), help="vote average divisor")
    parser.add_argument("--top-m", type=int, help="cap on rendered tracks")
    parser.add_argument(
        "--propagator", choices=PROPAGATOR_KINDS, help="propagator kind"
    )
    parser.add_argument("--motion-table", help="motion table JSON for affine-motion")
    parser.add_argument(
        "--plugin-command", help="external propagator command line (plugin kind)"
    )
    parser.add_argument(
        "--no-mpgraph",
        action="store_true",
        help="bypass graph voting; use raw key frame detections",
    )


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    changes = {}
    for attr, key in (
        ("seed", "seed"),
        ("workers", "worker_count"),
        ("keyframes", "keyframes"),
        ("clip_size", "clip_size"),
        ("t0", "t0"),
        ("t1", "t1"),
        ("min_area", "min_area"),
        ("nms_threshold", "nms_threshold"),
        ("vote_divisor", "vote_divisor"),
        ("top_m", "top_m"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            changes[key] = value
    prop_changes = {}
    if getattr(args, "propagator", None) is not None:
        prop_changes["kind"] = args.propagator
    if getattr(args, "motion_table", None) is not None:
        prop_changes["motion_table"] = args.motion_table
    if getattr(args, "plugin_command", None) is not None:
        prop_changes["command"] = tuple(shlex.split(args.plugin_command))
    if prop_changes:
        base = cfg.propagator
        merged = {
            "kind": prop_changes.get("kind", base.kind),
            "motion_table": prop_changes.get("motion_table", base.motion_table),
            "seed": base.seed,
            "strength": base.strength,
            "command": prop_changes.get("command", base.command),
        }
        try:
            changes["propagator"] = PropagatorSpec(**merged)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "no_mpgraph", False):
        changes["mpgraph"] = False
    return cfg.replace(**changes) if changes else cfg


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    if (args.corpus is None) == (args.manifest is None):
        raise ConfigError("run needs exactly one of --corpus or --manifest")
    if args.corpus:
        report, failed = run_corpus(cfg, args.corpus, args.out, plots=args.plots)
        mean = report["mean"]
        if mean:
            logger.info(
                "evaluated %d videos: J&F %.4f (J %.4f, F %.4f)",
                report["video_count"],
                mean["jf"],
                mean["j"],
                mean["f"],
            )
        return 4 if failed else 0
    manifest = load_manifest(args.manifest)
    result = run_video(cfg, manifest)
    write_video_outputs(result, args.out)
    logger.info(
        "%s: %d tracks kept", result.video_id, result.sequences.count
    )
    return 4 if result.keyframe_failures else 0


def _cmd_refine(args) -> int:
    cfg = _build_config(args)
    manifest = load_manifest(args.manifest)
    refined, failures = refine_all_keyframes(cfg, manifest, workers=cfg.worker_count)
    out_path = os.path.join(args.out, manifest.video.video_id, "refined.json")
    atomic_write_text(out_path, refined_to_json(refined))
    total = sum(len(props) for props in refined.values())
    logger.info(
        "%s: %d refined proposals over %d key frames",
        manifest.video.video_id,
        total,
        len(refined),
    )
    return 4 if failures else 0


def _cmd_eval(args) -> int:
    _build_config(args)
    report, failed = eval_corpus(args.corpus, args.results, args.out, plots=args.plots)
    mean = report["mean"]
    if mean:
        logger.info("mean J&F %.4f over %d videos", mean["jf"], report["video_count"])
    return 4 if failed else 0


def _cmd_synth_generate(args) -> int:
    try:
        scenes = load_scene_file(args.spec)
        noise = load_noise_file(args.noise) if args.noise else NoiseSpec()
        if args.seed is not None:
            noise = dataclasses.replace(noise, seed=args.seed)
        for scene in scenes:
            video_dir = generate_video(scene, noise, args.out)
            logger.info("wrote %s", video_dir)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return 0


def _cmd_graph_dump(args) -> int:
    cfg = _build_config(args)
    manifest = load_manifest(args.manifest)
    video = manifest.video
    keyframes = select_keyframes(video.frame_count, cfg.keyframes)
    key_frame = args.key_frame if args.key_frame is not None else keyframes[0]
    if not 0 <= key_frame < video.frame_count:
        raise InputError(
            f"key frame {key_frame} outside video of {video.frame_count} frames"
        )
    clip = build_clip(key_frame, cfg.clip_size, video.frame_count)
    spec = effective_propagator(cfg)
    propagated = collect_clip(clip, manifest.detections_by_frame, spec, video)
    dot = to_dot(build_graph(propagated, cfg.t0))
    if args.out:
        atomic_write_text(args.out, dot)
        logger.info("wrote %s", args.out)
    else:
        sys.stdout.write(dot)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cliquefuse",
        description="Fuse noisy per-frame segmentation proposals into object tracks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run both stages, then evaluate if GT is present")
    run.add_argument("--corpus", help="corpus directory (one subdirectory per video)")
    run.add_argument("--manifest", help="single video manifest")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--plots", action="store_true", help="write per-frame J curve SVGs")
    _common_flags(run)
    _override_flags(run)
    run.set_defaults(func=_cmd_run)

    refine = sub.add_parser("refine", help="stage 1 only: refined key frame proposals")
    refine.add_argument("--manifest", required=True, help="video manifest")
    refine.add_argument("--out", required=True, help="output directory")
    _common_flags(refine)
    _override_flags(refine)
    refine.set_defaults(func=_cmd_refine)

    ev = sub.add_parser("eval", help="score existing outputs against ground truth")
    ev.add_argument("--corpus", required=True, help="corpus directory with gt/")
    ev.add_argument("--results", required=True, help="directory holding run outputs")
    ev.add_argument("--out", required=True, help="report output directory")
    ev.add_argument("--plots", action="store_true", help="write per-frame J curve SVGs")
    _common_flags(ev)
    ev.set_defaults(func=_cmd_eval)

    synth = sub.add_parser("synth", help="synthetic data commands")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)
    gen = synth_sub.add_parser("generate", help="render scenes to a corpus directory")
    gen.add_argument("--spec", required=True, help="scene JSON (one scene or {videos: [...]})")
    gen.add_argument("--noise", help="noise JSON; omitted means clean detections")
    gen.add_argument("--out", required=True, help="corpus output directory")
    _common_flags(gen)
    gen.set_defaults(func=_cmd_synth_generate)

    graph = sub.add_parser("graph", help="graph inspection commands")
    graph_sub = graph.add_subparsers(dest="graph_command", required=True)
    dump = graph_sub.add_parser("dump", help="DOT dump of one key frame's graph")
    dump.add_argument("--manifest", required=True, help="video manifest")
    dump.add_argument("--key-frame", type=int, help="key frame (default: first selected)")
    dump.add_argument("--out", help="output DOT file (default: stdout)")
    _common_flags(dump)
    _override_flags(dump)
    dump.set_defaults(func=_cmd_graph_dump)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return 2
    except InputError as exc:
        logger.error("input error: %s", exc)
        return 3
    except PropagationError as exc:
        logger.error("propagation error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
