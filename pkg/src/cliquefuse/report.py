"""Evaluation reports: per-video metrics, corpus aggregation, files, figures.

The report carries, per video and per ground-truth object, region similarity
J, boundary accuracy F, their mean J&F, recall and decay for both, and the
key frame proposal mIoU when Stage 1 output is available.  Matching between
predicted tracks and ground-truth objects is optimal one-to-one on the J&F
mean; unmatched ground-truth objects score zero.

report.json is written with sorted keys so identical results are identical
bytes.  The optional figures are one SVG per video plotting per-frame J for
every object.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .metrics import (
    GroundTruth,
    boundary_accuracy,
    default_boundary_tolerance,
    match_tracks,
    proposal_miou,
    recall_and_decay,
    region_similarity,
)
from .outputs import atomic_write_text
from .sequences import SequenceSet

MEAN_FIELDS = ("j", "f", "jf", "j_recall", "j_decay", "f_recall", "f_decay")


def _interior(values: Sequence[float]) -> list[float]:
    return list(values[1:-1]) if len(values) > 2 else list(values)


def evaluate_video(
    video_id: str,
    seqs: SequenceSet,
    gt: GroundTruth,
    refined=None,
) -> tuple[dict, dict[int, list[float]]]:
    """Score one video; returns (report entry, per-object per-frame J curves).

    ``refined`` optionally maps key frame id to Stage 1 proposals (anything
    with .mask and .key_frame); when present the entry carries proposal_miou.
    """
    assignment = match_tracks(seqs, gt)
    tol = default_boundary_tolerance(gt.grid)
    objects = []
    curves: dict[int, list[float]] = {}
    for label in range(1, gt.object_count + 1):
        gt_masks = gt.object_masks(label)
        track_index = assignment[label]
        if track_index is None:
            j_values = [0.0] * gt.frame_count
            f_values = [0.0] * gt.frame_count
            j_mean = 0.0
            f_mean = 0.0
        else:
            track = seqs.tracks[track_index]
            j_values, j_mean = region_similarity(track, gt_masks)
            f_values, f_mean = boundary_accuracy(track, gt_masks, tol)
        j_recall, j_decay = recall_and_decay(_interior(j_values))
        f_recall, f_decay = recall_and_decay(_interior(f_values))
        objects.append(
            {
                "object": label,
                "track_id": None if track_index is None else seqs.tracks[track_index].track_id,
                "j": j_mean,
                "f": f_mean,
                "jf": (j_mean + f_mean) / 2.0,
                "j_recall": j_recall,
                "j_decay": j_decay,
                "f_recall": f_recall,
                "f_decay": f_decay,
            }
        )
        curves[label] = j_values
    entry: dict = {"video_id": video_id, "objects": objects}
    count = max(len(objects), 1)
    for field in MEAN_FIELDS:
        entry[field] = sum(o[field] for o in objects) / count
    if refined is not None:
        proposals = [p for props in refined.values() for p in props]
        gt_slices = {g: gt.labels[g] for g in refined}
        entry["proposal_miou"] = proposal_miou(proposals, gt_slices)
    return entry, curves


def aggregate(videos: list[dict], failures: list[dict] | None = None) -> dict:
    """Fold per-video entries into the corpus report, videos sorted by id."""
    videos = sorted(videos, key=lambda v: v["video_id"])
    mean: dict = {}
    if videos:
        for field in MEAN_FIELDS:
            mean[field] = sum(v[field] for v in videos) / len(videos)
        with_miou = [v["proposal_miou"] for v in videos if "proposal_miou" in v]
        if with_miou:
            mean["proposal_miou"] = sum(with_miou) / len(with_miou)
    return {
        "videos": videos,
        "mean": mean,
        "video_count": len(videos),
        "failures": sorted(failures or [], key=lambda f: f["video_id"]),
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: dict) -> str:
    columns = ["video_id", *MEAN_FIELDS, "proposal_miou"]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)

    def row(entry, name):
        values = [name]
        for field in columns[1:]:
            value = entry.get(field, "")
            values.append(f"{value:.6f}" if value != "" else "")
        return values
    for video in report["videos"]:
        writer.writerow(row(video, video["video_id"]))
    if report["videos"]:
        writer.writerow(row(report["mean"], "mean"))
    return buffer.getvalue()


def write_report(report: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "report.json"), report_to_json(report))
    atomic_write_text(os.path.join(out_dir, "report.csv"), report_to_csv(report))


def write_curve_figures(curves_by_video: dict[str, dict[int, list[float]]], out_dir: str) -> list[str]:
    """One SVG per video: per-frame J for every ground-truth object."""
    figures_dir = os.path.join(out_dir, "figures")
    os.makedirs(figures_dir, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "fixed"
    written = []
    for video_id in sorted(curves_by_video):
        curves = curves_by_video[video_id]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for label in sorted(curves):
            values = curves[label]
            ax.plot(range(len(values)), values, marker=".", label=f"object {label}")
        ax.set_xlabel("frame")
        ax.set_ylabel("J")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(video_id)
        ax.legend(loc="lower left", fontsize="small")
        fig.tight_layout()
        path = os.path.join(figures_dir, f"{video_id}_j.svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
