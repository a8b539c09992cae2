"""Tracking by detection over merged visible/thermal detections.

A constant-velocity Kalman filter per track, IoU association, and a
tentative/confirmed lifecycle. Detections from the two sensors are merged
by per-class non-maximum suppression before association; a box suppressed
from the other sensor promotes its survivor to the fused modality F.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assignment import Box, iou, iou_matrix, match_with_threshold
from .data import AnnotationRecord, AnnotationSet, Detection, TrajectorySet

_MIN_BOX_SIZE = 1e-2  # state width/height are clamped above this after updates


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker knobs.

    Noise scales follow the usual box-height convention: measurement and
    process position stds are ``pos_std`` times the box height, velocity
    stds ``vel_std`` times it. A track is confirmed once it has been
    updated ``min_hits`` times; the first ``min_hits`` frames of a
    sequence are a grace period where fresh tracks confirm immediately,
    so output does not lag the start of the video.
    """

    assoc_iou: float = 0.3
    max_age: int = 30
    min_hits: int = 3
    score_birth: float = 0.4
    nms_iou: float = 0.65
    pos_std: float = 1.0 / 20.0
    vel_std: float = 1.0 / 160.0


@dataclass(frozen=True)
class TrackState:
    """One track: 8-state mean (cx, cy, w, h and their velocities) plus
    covariance, lifecycle counters, and the class it was born with."""

    track_id: int
    mean: np.ndarray
    cov: np.ndarray
    category: int
    hits: int = 1
    age: int = 0
    time_since_update: int = 0
    status: str = "tentative"

    @property
    def box(self) -> Box:
        cx, cy, w, h = self.mean[:4]
        return Box(cx - w / 2.0, cy - h / 2.0, w, h)


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.zeros((4, 8))
_H[:, :4] = np.eye(4)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def _measurement(box: Box) -> np.ndarray:
    return np.array([box.cx, box.cy, box.w, box.h])


def new_track(det: Detection, track_id: int, cfg: TrackerConfig) -> TrackState:
    z = _measurement(det.box)
    h = max(det.box.h, 1.0)
    mean = np.concatenate([z, np.zeros(4)])
    std = np.array([2 * cfg.pos_std * h] * 4 + [10 * cfg.vel_std * h] * 4)
    return TrackState(track_id=track_id, mean=mean, cov=np.diag(std ** 2),
                      category=det.category)


def kalman_predict(state: TrackState, cfg: TrackerConfig) -> TrackState:
    h = max(float(state.mean[3]), 1.0)
    q = np.array([cfg.pos_std * h] * 4 + [cfg.vel_std * h] * 4) ** 2
    mean = _F @ state.mean
    cov = _symmetrize(_F @ state.cov @ _F.T + np.diag(q))
    return replace(state, mean=mean, cov=cov, age=state.age + 1,
                   time_since_update=state.time_since_update + 1)


def kalman_update(state: TrackState, box: Box, cfg: TrackerConfig) -> TrackState:
    z = _measurement(box)
    h = max(box.h, 1.0)
    r = np.diag(np.full(4, (cfg.pos_std * h) ** 2))
    s = _H @ state.cov @ _H.T + r
    gain = np.linalg.solve(s, (state.cov @ _H.T).T).T
    innovation = z - _H @ state.mean
    mean = state.mean + gain @ innovation
    mean[2] = max(mean[2], _MIN_BOX_SIZE)
    mean[3] = max(mean[3], _MIN_BOX_SIZE)
    ikh = np.eye(8) - gain @ _H
    cov = _symmetrize(ikh @ state.cov @ ikh.T + gain @ r @ gain.T)
    return replace(state, mean=mean, cov=cov, hits=state.hits + 1,
                   time_since_update=0)


# ---------------------------------------------------------------------------
# cross-modal merge

def _det_order(d: Detection) -> tuple:
    # deterministic greedy order: score, then fixed tie-break keys
    rank = {"V": 0, "T": 1, "F": 2}[d.modality]
    return (-d.score, rank, d.box.x, d.box.y, d.box.w, d.box.h, d.category)


def merge_modal_detections(visible, infrared,
                           nms_iou: float = TrackerConfig.nms_iou) -> tuple[Detection, ...]:
    """Union of both sensors' detections, deduplicated by per-class NMS.

    Greedy by descending score: a surviving box suppresses same-class
    boxes overlapping it at or above ``nms_iou``. Survivors keep their
    score; a survivor whose suppressed duplicates include the other
    modality is relabeled F.
    """
    pool = sorted(list(visible) + list(infrared), key=_det_order)
    suppressed = [False] * len(pool)
    out = []
    for i, d in enumerate(pool):
        if suppressed[i]:
            continue
        fused = False
        for j in range(i + 1, len(pool)):
            if suppressed[j] or pool[j].category != d.category:
                continue
            if iou(d.box, pool[j].box) >= nms_iou:
                suppressed[j] = True
                if pool[j].modality != d.modality:
                    fused = True
        out.append(replace(d, modality="F") if fused and d.modality != "F" else d)
    return tuple(out)


# ---------------------------------------------------------------------------
# stepping

@dataclass(frozen=True)
class TrackerState:
    tracks: tuple[TrackState, ...] = ()
    next_id: int = 1
    frame_count: int = 0


@dataclass(frozen=True)
class TrackOutput:
    track_id: int
    box: Box
    category: int


def track_step(state: TrackerState, detections, cfg: TrackerConfig
               ) -> tuple[TrackerState, tuple[TrackOutput, ...]]:
    """Advance one frame: predict, associate, update, spawn, retire, emit.

    Association is class-aware and runs confirmed tracks first, then
    tentative ones against the leftover detections. Only tracks that are
    confirmed and were updated this frame are emitted. Track ids are never
    reused.
    """
    frame_count = state.frame_count + 1
    tracks = [kalman_predict(t, cfg) for t in state.tracks]
    dets = list(detections)

    matched: dict[int, int] = {}  # track index -> detection index
    used_dets: set[int] = set()
    categories = sorted({t.category for t in tracks} | {d.category for d in dets})
    for cat in categories:
        det_idx = [k for k, d in enumerate(dets) if d.category == cat]
        for tier in ("confirmed", "tentative"):
            t_idx = [k for k, t in enumerate(tracks)
                     if t.category == cat and t.status == tier]
            free_d = [k for k in det_idx if k not in used_dets]
            if not t_idx or not free_d:
                continue
            sim = iou_matrix([tracks[k].box for k in t_idx],
                             [dets[k].box for k in free_d])
            for i, j in match_with_threshold(sim, cfg.assoc_iou):
                matched[t_idx[i]] = free_d[j]
                used_dets.add(free_d[j])

    survivors: list[TrackState] = []
    emitted: list[TrackOutput] = []
    for k, t in enumerate(tracks):
        if k in matched:
            t = kalman_update(t, dets[matched[k]].box, cfg)
            if t.status == "tentative" and (t.hits >= cfg.min_hits
                                            or frame_count <= cfg.min_hits):
                t = replace(t, status="confirmed")
        if t.time_since_update > cfg.max_age:
            continue
        survivors.append(t)
        if t.status == "confirmed" and t.time_since_update == 0:
            emitted.append(TrackOutput(t.track_id, t.box, t.category))

    next_id = state.next_id
    for k, d in enumerate(dets):
        if k in used_dets or d.score < cfg.score_birth:
            continue
        t = new_track(d, next_id, cfg)
        next_id += 1
        if frame_count <= cfg.min_hits:
            t = replace(t, status="confirmed")
            emitted.append(TrackOutput(t.track_id, t.box, t.category))
        survivors.append(t)

    emitted.sort(key=lambda e: e.track_id)
    return (TrackerState(tracks=tuple(survivors), next_id=next_id,
                         frame_count=frame_count),
            tuple(emitted))


@dataclass(frozen=True)
class TrackingResult:
    trajectories: TrajectorySet
    categories: dict[int, int]

    def to_annotations(self) -> AnnotationSet:
        """Result rows in the 9-column ground-truth format (valid=1)."""
        records = []
        for tid in self.trajectories.ids():
            for frame, box in self.trajectories.track(tid):
                records.append(AnnotationRecord(
                    frame=frame, track_id=tid, x=box.x, y=box.y,
                    w=box.w, h=box.h, valid=1,
                    category=self.categories[tid], reserved=1))
        return AnnotationSet(records)


def track_sequence(frame_detections, cfg: TrackerConfig | None = None) -> TrackingResult:
    """Run the tracker over per-frame detection lists (index 0 = frame 1)."""
    cfg = cfg or TrackerConfig()
    state = TrackerState()
    samples: dict[int, list[tuple[int, Box]]] = {}
    categories: dict[int, int] = {}
    for i, dets in enumerate(frame_detections):
        state, outputs = track_step(state, dets, cfg)
        for out in outputs:
            samples.setdefault(out.track_id, []).append((i + 1, out.box))
            categories[out.track_id] = out.category
    return TrackingResult(trajectories=TrajectorySet(samples),
                          categories=categories)
