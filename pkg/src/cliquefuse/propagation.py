"""Mask propagation between frames: the stand-in for a learned tracker.

Four propagator kinds share one contract (transport a probability mask from a
source frame to a target frame):

* ``identity`` returns the mask unchanged; the baseline for static fixtures.
* ``affine-motion`` warps through a per-frame motion table (JSON array of
  {dx, dy, scale, rotation_deg}), composing steps across the frame gap.
* ``noisy`` corrupts the mask with seeded morphology and hole punching, then
  transports it unchanged; models tracker failure without motion.
* ``plugin`` hands the work to an external process speaking line-delimited
  JSON over stdio, exchanging masks as PNG files on disk.

``track_bidirectional`` chains single-frame hops outward from a key frame,
carrying the soft mask between hops and binarizing each frame's snapshot.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
import threading
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .affine import chain_matrix, load_motion_table, warp_levels
from .masks import GridShape, Mask, ProbMask, binarize
from .sequences import Track


class PropagationError(RuntimeError):
    """Raised when a propagator cannot produce a mask for the target frame."""


PROPAGATOR_KINDS = ("identity", "affine-motion", "noisy", "plugin")


@dataclass(frozen=True)
class VideoFrames:
    """Frame references for one video; paths may be empty for in-memory runs."""

    video_id: str
    grid: GridShape
    frame_count: int
    frame_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.grid, GridShape):
            object.__setattr__(self, "grid", GridShape(*self.grid))
        if self.frame_count < 1:
            raise ValueError("video needs at least one frame")
        if self.frame_paths and len(self.frame_paths) != self.frame_count:
            raise ValueError(
                f"{len(self.frame_paths)} frame paths for {self.frame_count} frames"
            )


@dataclass(frozen=True)
class Proposal:
    source_frame: int
    prob: ProbMask
    objectness: float
    proposal_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must be in [0, 1], got {self.objectness}")


@dataclass(frozen=True)
class PropagatedProposal:
    origin_frame: int
    target_frame: int
    prob: ProbMask
    origin: int


@dataclass(frozen=True)
class PropagatorSpec:
    kind: str
    motion_table: str | None = None
    seed: int = 0
    strength: float = 1.0
    command: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in PROPAGATOR_KINDS:
            raise ValueError(
                f"unknown propagator kind {self.kind!r}; expected one of {PROPAGATOR_KINDS}"
            )
        if self.kind == "plugin" and not self.command:
            raise ValueError("plugin propagator needs a nonempty command")
        if self.kind == "affine-motion" and not self.motion_table:
            raise ValueError("affine-motion propagator needs a motion table path")
        if self.strength < 0:
            raise ValueError(f"strength must be nonnegative, got {self.strength}")

    @classmethod
    def from_dict(cls, data: dict) -> "PropagatorSpec":
        known = {"kind", "motion_table", "seed", "strength", "command"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown propagator keys: {sorted(extra)}")
        command = data.get("command", ())
        if isinstance(command, str):
            command = (command,)
        return cls(
            kind=data.get("kind", "identity"),
            motion_table=data.get("motion_table"),
            seed=int(data.get("seed", 0)),
            strength=float(data.get("strength", 1.0)),
            command=tuple(command),
        )


class Propagator:
    """Transports a ProbMask from one frame to another within a video."""

    def transport(
        self, video: VideoFrames, prob: ProbMask, source: int, target: int, slot: int = 0
    ) -> ProbMask:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class IdentityPropagator(Propagator):
    def transport(self, video, prob, source, target, slot=0):
        return prob


class AffinePropagator(Propagator):
    def __init__(self, table_path: str):
        self.table = load_motion_table(table_path)

    def transport(self, video, prob, source, target, slot=0):
        center = ((video.grid.width - 1) / 2.0, (video.grid.height - 1) / 2.0)
        matrix = chain_matrix(self.table, source, target, center)
        return ProbMask(prob.shape, warp_levels(prob.levels, matrix))


class NoisyPropagator(Propagator):
    """Identity transport plus seeded corruption on every actual hop.

    The corruption draws from a stream keyed by (seed, video, source, target,
    slot), so a rerun reproduces it bit for bit while every hop of every
    proposal sees independent noise.  Asking for target == source is a no-op.
    """

    def __init__(self, seed: int, strength: float = 1.0):
        self.seed = seed
        self.strength = strength

    def transport(self, video, prob, source, target, slot=0):
        if source == target:
            return prob
        entropy = [self.seed, zlib.crc32(video.video_id.encode()), source, target, slot]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        levels = prob.levels.copy()
        radius = int(rng.integers(0, 3))
        if radius > 0:
            size = 2 * radius + 1
            if int(rng.integers(0, 2)):
                levels = ndimage.grey_dilation(levels, size=(size, size))
            else:
                levels = ndimage.grey_erosion(levels, size=(size, size))
        h, w = levels.shape
        holes = int(rng.integers(0, 1 + max(round(2 * self.strength), 0)))
        for _ in range(holes):
            hh = int(rng.integers(1, max(h // 4, 2)))
            ww = int(rng.integers(1, max(w // 4, 2)))
            top = int(rng.integers(0, max(h - hh, 1)))
            left = int(rng.integers(0, max(w - ww, 1)))
            levels[top : top + hh, left : left + ww] = 0
        return ProbMask(prob.shape, levels)


class PluginPropagator(Propagator):
    """Bridge to an external tracker process.

    One child process per bridge; requests are serialized with a lock so a
    bridge can be shared, though the pipeline gives each worker its own.
    Masks cross the boundary as PNG files in a private temp directory; the
    request line carries their paths plus the frame references, and the child
    answers each line in order with {"prob_png": path} or {"error": reason}.
    """

    def __init__(self, command: tuple[str, ...]):
        self.command = command
        self._lock = threading.Lock()
        self._tmp = tempfile.TemporaryDirectory(prefix="propagator-plugin-")
        self._counter = 0
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
            )
        except OSError as exc:
            self._tmp.cleanup()
            raise PropagationError(f"cannot start plugin {command!r}: {exc}") from exc

    def _diagnostic(self) -> str:
        try:
            err = self._proc.stderr.read() if self._proc.stderr else ""
        except (OSError, ValueError):
            err = ""
        code = self._proc.poll()
        detail = err.strip() or "no stderr output"
        return f"plugin exited with code {code}: {detail}"

    def transport(self, video, prob, source, target, slot=0):
        with self._lock:
            if self._proc.poll() is not None:
                raise PropagationError(self._diagnostic())
            self._counter += 1
            stem = os.path.join(self._tmp.name, f"req{self._counter:06d}")
            prob_path = stem + "-prob.png"
            mask_path = stem + "-mask.png"
            prob.save_png(prob_path)
            ProbMask.from_mask(binarize(prob, 0.5)).save_png(mask_path)
            request = {
                "video_id": video.video_id,
                "frames": list(video.frame_paths),
                "source_frame": source,
                "target_frame": target,
                "mask_png": mask_path,
                "prob_png": prob_path,
            }
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise PropagationError(self._diagnostic()) from exc
            if not line:
                raise PropagationError(self._diagnostic())
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PropagationError(f"malformed plugin response {line!r}: {exc}") from exc
            if "error" in response:
                raise PropagationError(f"plugin error: {response['error']}")
            if "prob_png" not in response:
                raise PropagationError(f"plugin response missing prob_png: {response!r}")
            try:
                out = ProbMask.load_png(response["prob_png"])
            except (OSError, ValueError) as exc:
                raise PropagationError(
                    f"cannot read plugin output {response['prob_png']!r}: {exc}"
                ) from exc
            if out.shape != video.grid:
                raise PropagationError(
                    f"plugin returned grid {out.shape}, video uses {video.grid}"
                )
            return out

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is not None:
            try:
                if proc.stdin:
                    proc.stdin.close()
                proc.wait(timeout=5)
            except (OSError, ValueError, subprocess.TimeoutExpired):
                proc.kill()
                proc.wait()
            finally:
                for stream in (proc.stdout, proc.stderr):
                    if stream:
                        stream.close()
        self._tmp.cleanup()


def make_propagator(spec: PropagatorSpec) -> Propagator:
    if spec.kind == "identity":
        return IdentityPropagator()
    if spec.kind == "affine-motion":
        return AffinePropagator(spec.motion_table)
    if spec.kind == "noisy":
        return NoisyPropagator(spec.seed, spec.strength)
    return PluginPropagator(spec.command)


def propagate(
    spec: PropagatorSpec,
    video: VideoFrames,
    proposal: Proposal,
    target: int,
    propagator: Propagator | None = None,
) -> PropagatedProposal:
    """Move one proposal's ProbMask to the target frame.

    Passing an existing propagator reuses it (required to amortize plugin
    startup); otherwise one is created and closed around the call.
    """
    for frame in (proposal.source_frame, target):
        if not 0 <= frame < video.frame_count:
            raise PropagationError(
                f"frame {frame} outside video of {video.frame_count} frames"
            )
    owned = propagator is None
    prop = make_propagator(spec) if owned else propagator
    try:
        moved = prop.transport(
            video, proposal.prob, proposal.source_frame, target, proposal.proposal_id
        )
    finally:
        if owned:
            prop.close()
    return PropagatedProposal(
        origin_frame=proposal.source_frame,
        target_frame=target,
        prob=moved,
        origin=proposal.proposal_id,
    )


def track_bidirectional(
    spec: PropagatorSpec,
    video: VideoFrames,
    keyframe_proposals: list[Mask],
    key_frame: int,
    first_track_id: int = 0,
    propagator: Propagator | None = None,
) -> list[Track]:
    """Track each key frame mask over all frames, hopping frame by frame.

    The soft mask is carried between hops; each frame's entry is its
    binarization at 0.5.  The key frame entry is the input mask itself.
    """
    if not 0 <= key_frame < video.frame_count:
        raise PropagationError(
            f"key frame {key_frame} outside video of {video.frame_count} frames"
        )
    owned = propagator is None
    prop = make_propagator(spec) if owned else propagator
    tracks = []
    try:
        for slot, mask in enumerate(keyframe_proposals):
            if mask.shape != video.grid:
                raise PropagationError(
                    f"proposal grid {mask.shape} does not match video grid {video.grid}"
                )
            per_frame: dict[int, Mask] = {key_frame: mask}
            state = ProbMask.from_mask(mask)
            for t in range(key_frame + 1, video.frame_count):
                state = prop.transport(video, state, t - 1, t, slot)
                per_frame[t] = binarize(state, 0.5)
            state = ProbMask.from_mask(mask)
            for t in range(key_frame - 1, -1, -1):
                state = prop.transport(video, state, t + 1, t, slot)
                per_frame[t] = binarize(state, 0.5)
            tracks.append(
                Track(
                    track_id=first_track_id + slot,
                    key_frame=key_frame,
                    masks=tuple(per_frame[t] for t in range(video.frame_count)),
                )
            )
    finally:
        if owned:
            prop.close()
    return tracks
