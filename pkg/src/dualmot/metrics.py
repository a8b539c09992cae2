"""Tracking metrics: CLEAR (MOTA/MOTP), IDF1, and HOTA.

All scores are fractions in [0, 1]; any percent scaling happens at the
presentation layer, never here. Reports keep their raw counts so that
multi-sequence pooling can sum counts first and take ratios once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import hungarian, iou_matrix
from .data import TrajectorySet

DEFAULT_IOU_THRESHOLD = 0.5

# k/20 rather than k*0.05: the correctly rounded double of k/20 is what a
# correctly rounded boundary IoU (e.g. 75/125 = 0.6) compares equal to
ALPHAS = tuple(float(k) / 20.0 for k in range(1, 20))

# cost for ineligible pairs; large enough that one more eligible match is
# always preferred over any total of eligible costs (each <= 1)
_BIG = 1.0e6

# secondary-key weight: big enough to order true ties, far below any
# association-score gap that desk-scale track lengths can produce
_TIE_EPS = 1.0e-8


class FrameRangeError(ValueError):
    """Ground truth and prediction disagree about the frame range."""


@dataclass(frozen=True)
class _FrameData:
    gt_ids: tuple[int, ...]
    pred_ids: tuple[int, ...]
    iou: np.ndarray  # len(gt_ids) x len(pred_ids)


def _frame_data(gt: TrajectorySet, pred: TrajectorySet,
                n_frames: int | None) -> list[_FrameData]:
    if n_frames is None:
        n_frames = max(gt.max_frame(), pred.max_frame())
    elif gt.max_frame() > n_frames or pred.max_frame() > n_frames:
        raise FrameRangeError(
            f"boxes beyond frame {n_frames}: gt up to {gt.max_frame()}, "
            f"pred up to {pred.max_frame()}")
    frames = []
    for t in range(1, n_frames + 1):
        gts = gt.at(t)
        prs = pred.at(t)
        frames.append(_FrameData(
            gt_ids=tuple(tid for tid, _ in gts),
            pred_ids=tuple(tid for tid, _ in prs),
            iou=iou_matrix([b for _, b in gts], [b for _, b in prs]),
        ))
    return frames


def _max_weight_match(weights: np.ndarray, eligible: np.ndarray) -> list[tuple[int, int]]:
    """One-to-one matching maximizing total weight over eligible pairs only.

    Leaving anything unmatched is free, so this is a maximum-weight
    matching, not a forced complete assignment. Eligible weights must be
    positive.
    """
    nr, nc = weights.shape
    if nr == 0 or nc == 0 or not eligible.any():
        return []
    n = max(nr, nc)
    cost = np.zeros((n, n))
    cost[:nr, :nc][eligible] = -weights[eligible]
    res = hungarian(cost)
    return [(i, j) for i, j in res.pairs if i < nr and j < nc and eligible[i, j]]


# ---------------------------------------------------------------------------
# CLEAR

@dataclass(frozen=True)
class ClearReport:
    """CLEAR counts for one sequence or one pooled group.

    ``n_gt`` is the number of ground-truth boxes. ``iou_sum`` accumulates
    the IoU of every true positive so MOTP pools correctly.
    """

    n_gt: int
    tp: int
    fn: int
    fp: int
    idsw: int
    iou_sum: float

    @property
    def mota(self) -> float:
        # guarded denominator keeps the empty-ground-truth edge finite
        return 1.0 - (self.fn + self.fp + self.idsw) / max(self.n_gt, 1)

    @property
    def motp(self) -> float:
        return self.iou_sum / self.tp if self.tp > 0 else 0.0


def _clear_from_frames(frames: list[_FrameData],
                       iou_threshold: float) -> ClearReport:
    n_gt = tp = fn = fp = idsw = 0
    iou_sum = 0.0
    last_match: dict[int, int] = {}  # most recent pred id per gt id, ever
    prev_pairs: dict[int, int] = {}  # matches made in the previous frame
    for fd in frames:
        gpos = {tid: k for k, tid in enumerate(fd.gt_ids)}
        ppos = {tid: k for k, tid in enumerate(fd.pred_ids)}
        n_gt += len(fd.gt_ids)
        matches: dict[int, int] = {}
        used_pred: set[int] = set()
        # keep last frame's pairings whenever they still clear the bar
        for g, p in prev_pairs.items():
            if g in gpos and p in ppos and fd.iou[gpos[g], ppos[p]] >= iou_threshold:
                matches[g] = p
                used_pred.add(p)
        rest_g = [g for g in fd.gt_ids if g not in matches]
        rest_p = [p for p in fd.pred_ids if p not in used_pred]
        if rest_g and rest_p:
            sub = fd.iou[np.ix_([gpos[g] for g in rest_g],
                                [ppos[p] for p in rest_p])]
            elig = sub >= iou_threshold
            if elig.any():
                cost = np.where(elig, 1.0 - sub, _BIG)
                for i, j in hungarian(cost).pairs:
                    if elig[i, j]:
                        matches[rest_g[i]] = rest_p[j]
        for g, p in matches.items():
            tp += 1
            iou_sum += float(fd.iou[gpos[g], ppos[p]])
            if g in last_match and last_match[g] != p:
                idsw += 1
            last_match[g] = p
        fn += len(fd.gt_ids) - len(matches)
        fp += len(fd.pred_ids) - len(matches)
        prev_pairs = matches
    return ClearReport(n_gt=n_gt, tp=tp, fn=fn, fp=fp, idsw=idsw, iou_sum=iou_sum)


def clear_metrics(gt: TrajectorySet, pred: TrajectorySet,
                  n_frames: int | None = None,
                  iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> ClearReport:
    """Frame-by-frame CLEAR evaluation with match carry-over.

    Matches from the previous frame are kept while their IoU stays at or
    above the threshold; the remainder is matched by minimum total
    (1 - IoU) among eligible pairs. An identity switch is counted whenever
    a ground-truth id is matched to a different prediction id than its
    most recent one.
    """
    return _clear_from_frames(_frame_data(gt, pred, n_frames), iou_threshold)


def pool_clear(reports) -> ClearReport:
    return ClearReport(
        n_gt=sum(r.n_gt for r in reports),
        tp=sum(r.tp for r in reports),
        fn=sum(r.fn for r in reports),
        fp=sum(r.fp for r in reports),
        idsw=sum(r.idsw for r in reports),
        iou_sum=sum(r.iou_sum for r in reports),
    )


# ---------------------------------------------------------------------------
# IDF1

@dataclass(frozen=True)
class IdReport:
    idtp: int
    idfp: int
    idfn: int

    @property
    def idf1(self) -> float:
        denom = 2 * self.idtp + self.idfp + self.idfn
        # vacuously perfect when there is nothing on either side
        return 2.0 * self.idtp / denom if denom > 0 else 1.0


def _idf1_from_frames(frames: list[_FrameData], gt: TrajectorySet,
                      pred: TrajectorySet, iou_threshold: float) -> IdReport:
    gt_ids = gt.ids()
    pred_ids = pred.ids()
    gidx = {tid: k for k, tid in enumerate(gt_ids)}
    pidx = {tid: k for k, tid in enumerate(pred_ids)}
    overlap = np.zeros((len(gt_ids), len(pred_ids)))
    for fd in frames:
        if not fd.gt_ids or not fd.pred_ids:
            continue
        rows = [gidx[t] for t in fd.gt_ids]
        cols = [pidx[t] for t in fd.pred_ids]
        overlap[np.ix_(rows, cols)] += fd.iou >= iou_threshold
    idtp = 0
    if overlap.size:
        pairs = _max_weight_match(overlap, overlap > 0)
        idtp = int(round(sum(overlap[i, j] for i, j in pairs)))
    return IdReport(idtp=idtp,
                    idfp=pred.n_boxes() - idtp,
                    idfn=gt.n_boxes() - idtp)


def idf1(gt: TrajectorySet, pred: TrajectorySet, n_frames: int | None = None,
         iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> IdReport:
    """Identity F1 via a global trajectory-to-trajectory matching.

    A frame contributes to IDTP only when the globally matched pair
    overlaps with IoU at or above the threshold in that frame; the
    bipartite matching maximizes total IDTP.
    """
    return _idf1_from_frames(_frame_data(gt, pred, n_frames), gt, pred,
                             iou_threshold)


def pool_id(reports) -> IdReport:
    return IdReport(
        idtp=sum(r.idtp for r in reports),
        idfp=sum(r.idfp for r in reports),
        idfn=sum(r.idfn for r in reports),
    )


# ---------------------------------------------------------------------------
# HOTA

@dataclass(frozen=True)
class AlphaScores:
    """Detection/association counts at one localization threshold.

    ``assoc_sum`` is the sum over true positives of their pair's realized
    association Jaccard, so pooled AssA is assoc_sum / tp.
    """

    alpha: float
    tp: int
    fn: int
    fp: int
    assoc_sum: float

    @property
    def deta(self) -> float:
        denom = self.tp + self.fn + self.fp
        return self.tp / denom if denom > 0 else 0.0

    @property
    def assa(self) -> float:
        return self.assoc_sum / self.tp if self.tp > 0 else 0.0

    @property
    def hota(self) -> float:
        return math.sqrt(self.deta * self.assa)


@dataclass(frozen=True)
class HotaReport:
    per_alpha: tuple[AlphaScores, ...]

    @property
    def hota(self) -> float:
        return sum(a.hota for a in self.per_alpha) / len(self.per_alpha)

    @property
    def deta(self) -> float:
        return sum(a.deta for a in self.per_alpha) / len(self.per_alpha)

    @property
    def assa(self) -> float:
        return sum(a.assa for a in self.per_alpha) / len(self.per_alpha)


def _hota_from_frames(frames: list[_FrameData], gt: TrajectorySet,
                      pred: TrajectorySet) -> HotaReport:
    gt_ids = gt.ids()
    pred_ids = pred.ids()
    gidx = {tid: k for k, tid in enumerate(gt_ids)}
    pidx = {tid: k for k, tid in enumerate(pred_ids)}
    len_g = np.array([len(gt.track(t)) for t in gt_ids], dtype=np.float64)
    len_p = np.array([len(pred.track(t)) for t in pred_ids], dtype=np.float64)
    n_gt_boxes = gt.n_boxes()
    n_pred_boxes = pred.n_boxes()
    frame_idx = [([gidx[t] for t in fd.gt_ids], [pidx[t] for t in fd.pred_ids])
                 for fd in frames]

    per_alpha = []
    for alpha in ALPHAS:
        pot = np.zeros((len(gt_ids), len(pred_ids)))
        for fd, (rows, cols) in zip(frames, frame_idx):
            if rows and cols:
                pot[np.ix_(rows, cols)] += fd.iou >= alpha
        union = len_g[:, None] + len_p[None, :] - pot
        a_pot = np.divide(pot, union, out=np.zeros_like(pot), where=pot > 0)

        tpa = np.zeros((len(gt_ids), len(pred_ids)))
        tp = 0
        for fd, (rows, cols) in zip(frames, frame_idx):
            if not rows or not cols:
                continue
            eligible = fd.iou >= alpha
            if not eligible.any():
                continue
            # primary key: potential-association Jaccard; IoU breaks ties
            weights = a_pot[np.ix_(rows, cols)] + _TIE_EPS * fd.iou
            for i, j in _max_weight_match(weights, eligible):
                tpa[rows[i], cols[j]] += 1
                tp += 1
        realized = tpa > 0
        assoc = np.divide(tpa, len_g[:, None] + len_p[None, :] - tpa,
                          out=np.zeros_like(tpa), where=realized)
        assoc_sum = float((tpa * assoc).sum())
        per_alpha.append(AlphaScores(alpha=alpha, tp=tp,
                                     fn=n_gt_boxes - tp,
                                     fp=n_pred_boxes - tp,
                                     assoc_sum=assoc_sum))
    return HotaReport(per_alpha=tuple(per_alpha))


def hota(gt: TrajectorySet, pred: TrajectorySet,
         n_frames: int | None = None) -> HotaReport:
    """HOTA over the 19-point localization-threshold grid 0.05 .. 0.95.

    Per threshold: a per-frame one-to-one matching among pairs with
    IoU >= alpha, preferring pairs whose tracks could co-match often
    (Jaccard of co-matched potential over both track lengths) and breaking
    ties by IoU; DetA from TP/FN/FP counts, AssA as the mean realized
    association Jaccard over true positives, HOTA_alpha their geometric
    mean, and the headline score the arithmetic mean across thresholds.
    """
    return _hota_from_frames(_frame_data(gt, pred, n_frames), gt, pred)


def pool_hota(reports) -> HotaReport:
    merged = []
    for k, alpha in enumerate(ALPHAS):
        merged.append(AlphaScores(
            alpha=alpha,
            tp=sum(r.per_alpha[k].tp for r in reports),
            fn=sum(r.per_alpha[k].fn for r in reports),
            fp=sum(r.per_alpha[k].fp for r in reports),
            assoc_sum=sum(r.per_alpha[k].assoc_sum for r in reports),
        ))
    return HotaReport(per_alpha=tuple(merged))


# ---------------------------------------------------------------------------
# combined evaluation

@dataclass(frozen=True)
class SequenceScores:
    clear: ClearReport
    ident: IdReport
    hota: HotaReport


@dataclass(frozen=True)
class SequenceItem:
    """One sequence to evaluate: ground truth, prediction, bookkeeping."""

    name: str
    gt: TrajectorySet
    pred: TrajectorySet
    n_frames: int
    platform: str = "unknown"


@dataclass(frozen=True)
class GroupScores:
    name: str
    sequences: dict[str, SequenceScores]
    pooled: SequenceScores


@dataclass(frozen=True)
class EvaluationReport:
    protocol: int
    groups: tuple[GroupScores, ...]

    def group(self, name: str) -> GroupScores:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)


GROUP_ORDER = ("handheld", "surveillance", "UAV", "unknown")


def evaluate_pair(gt: TrajectorySet, pred: TrajectorySet,
                  n_frames: int | None = None,
                  iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> SequenceScores:
    """All three metric families over one gt/prediction pair."""
    frames = _frame_data(gt, pred, n_frames)
    return SequenceScores(
        clear=_clear_from_frames(frames, iou_threshold),
        ident=_idf1_from_frames(frames, gt, pred, iou_threshold),
        hota=_hota_from_frames(frames, gt, pred),
    )


def pool_scores(scores) -> SequenceScores:
    scores = list(scores)
    return SequenceScores(
        clear=pool_clear([s.clear for s in scores]),
        ident=pool_id([s.ident for s in scores]),
        hota=pool_hota([s.hota for s in scores]),
    )


def evaluate(items, protocol: int = 1,
             scores: dict[str, SequenceScores] | None = None) -> EvaluationReport:
    """Evaluate sequences under protocol 1 (pool everything) or protocol 2
    (group by platform, reporting each group pooled plus the overall pool).

    ``scores`` can carry precomputed per-sequence results (keyed by name)
    so callers can fan the expensive part out; anything missing is
    computed here.
    """
    if protocol not in (1, 2):
        raise ValueError(f"protocol must be 1 or 2, got {protocol}")
    items = list(items)
    names = [it.name for it in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate sequence names")
    computed: dict[str, SequenceScores] = dict(scores or {})
    for it in items:
        if it.name not in computed:
            computed[it.name] = evaluate_pair(it.gt, it.pred, it.n_frames)

    def make_group(name: str, members) -> GroupScores:
        members = sorted(members, key=lambda it: it.name)
        seq_scores = {it.name: computed[it.name] for it in members}
        return GroupScores(name=name, sequences=seq_scores,
                           pooled=pool_scores(seq_scores.values()))

    groups = []
    if protocol == 2:
        for platform in GROUP_ORDER:
            members = [it for it in items if it.platform == platform]
            if members:
                groups.append(make_group(platform, members))
    groups.append(make_group("all", items))
    return EvaluationReport(protocol=protocol, groups=tuple(groups))
