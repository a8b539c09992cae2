"""Synthetic sequence generation with exact error bookkeeping.

Scenarios are produced from a tiny explicit PRNG (SplitMix64) rather than a
library generator so that fixtures are reproducible from the seed alone,
in any language, for as long as this file exists. The draw order is part
of the contract: per frame, tracks in id order draw (drop?, dx, dy, score,
modality), then the frame draws its false-positive decision.
"""

from __future__ import annotations

from dataclasses import dataclass

from .assignment import Box, iou
from .data import (
    AnnotationRecord,
    AnnotationSet,
    Detection,
    SequenceMeta,
)

MOTIONS = ("linear", "crossing", "stationary")

_MASK = (1 << 64) - 1


class Rng:
    """SplitMix64: state advances by the golden-gamma constant, output is
    the finalizer mix of the new state. uniform() uses the top 53 bits."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Integer in [0, n) by the multiply-shift reduction."""
        return (self.next_u64() * n) >> 64


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs for one synthetic sequence.

    ``drop_rate`` is the per-box probability a detection goes missing,
    ``jitter_px`` the maximum per-axis detection offset, and ``fp_rate``
    the per-frame probability of one injected false box placed away from
    every ground-truth box.
    """

    name: str = "synthetic"
    n_tracks: int = 3
    n_frames: int = 50
    motion: str = "linear"
    width: int = 640
    height: int = 512
    frame_rate: float = 25.0
    drop_rate: float = 0.0
    jitter_px: float = 0.0
    fp_rate: float = 0.0
    seed: int = 0
    platform: str = "unknown"

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        if not 0.0 <= self.fp_rate < 1.0:
            raise ValueError("fp_rate must be in [0, 1)")
        if self.jitter_px < 0.0:
            raise ValueError("jitter_px must be non-negative")
        if self.n_tracks < 1 or self.n_frames < 1:
            raise ValueError("need at least one track and one frame")


@dataclass(frozen=True)
class SyntheticSequence:
    spec: ScenarioSpec
    meta: SequenceMeta
    annotations: AnnotationSet
    detections: tuple[Detection, ...]
    n_dropped: int
    n_false: int


@dataclass(frozen=True)
class ExpectedCounts:
    n_gt: int
    fn: int
    fp: int


def _track_paths(spec: ScenarioSpec, rng: Rng):
    """Per-track (x0, y0, vx, vy, w, h); paths stay inside the image."""
    margin = 8.0
    lane_h = (spec.height - 2 * margin) / spec.n_tracks
    max_side = min(42.0, lane_h - 4.0, spec.width / 4.0)
    if max_side < 18.0:
        raise ValueError(
            f"{spec.n_tracks} tracks do not fit {spec.width}x{spec.height}")
    paths = []
    for k in range(spec.n_tracks):
        w = float(int(rng.uniform_in(18.0, max_side)))
        h = float(int(rng.uniform_in(18.0, max_side)))
        lane_top = margin + k * lane_h
        y0 = lane_top + (lane_h - h) / 2.0
        span = spec.width - 2 * margin - w
        if spec.motion == "stationary":
            x0 = margin + span * (k + 0.5) / spec.n_tracks
            vx, vy = 0.0, 0.0
        elif spec.motion == "linear":
            # alternate directions so neighbouring lanes move oppositely
            if k % 2 == 0:
                x0, vx = margin, span / max(spec.n_frames - 1, 1)
            else:
                x0, vx = margin + span, -span / max(spec.n_frames - 1, 1)
            vy = 0.0
        else:  # crossing: lanes converge toward a shared band mid-sequence
            x0 = margin if k % 2 == 0 else margin + span
            vx = (span if k % 2 == 0 else -span) / max(spec.n_frames - 1, 1)
            y_mid = spec.height / 2.0 - h / 2.0 + 3.0 * k  # offset so boxes
            vy = (y_mid - y0) * 2.0 / max(spec.n_frames - 1, 1)  # never coincide
        paths.append((x0, y0, vx, vy, w, h))
    return paths


def _far_box(spec: ScenarioSpec, rng: Rng, frame_boxes) -> Box | None:
    """A box with zero overlap against every box in the frame, or None
    when rejection sampling runs out of tries."""
    for _ in range(64):
        w = float(int(rng.uniform_in(18.0, 42.0)))
        h = float(int(rng.uniform_in(18.0, 42.0)))
        x = rng.uniform_in(0.0, spec.width - w)
        y = rng.uniform_in(0.0, spec.height - h)
        cand = Box(x, y, w, h)
        if all(iou(cand, b) == 0.0 for b in frame_boxes):
            return cand
    return None


def generate_synthetic_sequence(spec: ScenarioSpec) -> SyntheticSequence:
    """Ground truth from an exact motion model plus seeded detector noise.

    The same spec always yields byte-identical files once serialized.
    """
    rng = Rng(spec.seed)
    paths = _track_paths(spec, rng)

    records = []
    detections = []
    n_dropped = 0
    n_false = 0
    for t in range(1, spec.n_frames + 1):
        frame_boxes = []
        for k, (x0, y0, vx, vy, w, h) in enumerate(paths):
            box = Box(x0 + vx * (t - 1), y0 + vy * (t - 1), w, h)
            frame_boxes.append(box)
            track_id = k + 1
            category = 1 + (k % 2)
            records.append(AnnotationRecord(
                frame=t, track_id=track_id, x=box.x, y=box.y, w=box.w,
                h=box.h, valid=1, category=category, reserved=1))
            if rng.uniform() < spec.drop_rate:
                n_dropped += 1
                continue
            dx = rng.uniform_in(-spec.jitter_px, spec.jitter_px) if spec.jitter_px else 0.0
            dy = rng.uniform_in(-spec.jitter_px, spec.jitter_px) if spec.jitter_px else 0.0
            score = rng.uniform_in(0.6, 1.0)
            modality = "V" if rng.uniform() < 0.5 else "T"
            detections.append(Detection(
                frame=t, box=Box(box.x + dx, box.y + dy, w, h),
                score=score, category=category, modality=modality))
        if spec.fp_rate and rng.uniform() < spec.fp_rate:
            cand = _far_box(spec, rng, frame_boxes)
            if cand is not None:
                n_false += 1
                detections.append(Detection(
                    frame=t, box=cand, score=rng.uniform_in(0.5, 0.9),
                    category=1 + rng.randint(2),
                    modality="V" if rng.uniform() < 0.5 else "T"))

    meta = SequenceMeta(
        name=spec.name, frame_rate=spec.frame_rate, seq_length=spec.n_frames,
        visible_dir="visible", infrared_dir="infrared",
        visible_width=spec.width, visible_height=spec.height,
        infrared_width=spec.width, infrared_height=spec.height,
        platform=spec.platform)
    return SyntheticSequence(
        spec=spec, meta=meta, annotations=AnnotationSet(records),
        detections=tuple(sorted(detections, key=lambda d: d.frame)),
        n_dropped=n_dropped, n_false=n_false)


def expected_counts(seq: SyntheticSequence) -> ExpectedCounts:
    """Exact FN/FP bookkeeping for a generated scenario.

    Valid only while jitter cannot push a detection below IoU 0.5 against
    its source box; the worst case shifts a w x h box by jitter_px on both
    axes, so (w-j)(h-j) must stay at least two thirds of w*h.
    """
    j = seq.spec.jitter_px
    for r in seq.annotations.records:
        if j >= min(r.w, r.h) or (r.w - j) * (r.h - j) < (2.0 / 3.0) * r.w * r.h:
            raise ValueError(
                f"jitter {j} px can break the IoU>=0.5 guarantee for a "
                f"{r.w}x{r.h} box; counts would not be exact")
    return ExpectedCounts(n_gt=len(seq.annotations),
                          fn=seq.n_dropped, fp=seq.n_false)
