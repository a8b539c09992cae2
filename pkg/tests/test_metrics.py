"""Metric formulas against hand-worked scenarios and enumeration oracles.

The oracles reimplement each metric directly from its definition with
itertools enumeration instead of an assignment solver, so a bug would have
to appear twice, in two different shapes, to slip through.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualmot.assignment import Box, iou
from dualmot.data import TrajectorySet
from dualmot.metrics import (ALPHAS, FrameRangeError, SequenceItem,
                             clear_metrics, evaluate, evaluate_pair, hota,
                             idf1, pool_clear, pool_hota, pool_id,
                             pool_scores)
from tests.conftest import make_traj, straight_tracks

THR = 0.5


# ---------------------------------------------------------------------------
# enumeration oracles

def _one_to_one_subsets(rows, cols, ok):
    """Yield every one-to-one pairing (as a dict) using only ok pairs."""
    for k in range(min(len(rows), len(cols)), -1, -1):
        for rsub in itertools.combinations(rows, k):
            for csub in itertools.permutations(cols, k):
                pairs = list(zip(rsub, csub))
                if all(ok(g, p) for g, p in pairs):
                    yield dict(pairs)


def oracle_clear(gt: TrajectorySet, pred: TrajectorySet, n_frames: int):
    n_gt = tp = fn = fp = idsw = 0
    iou_sum = 0.0
    last: dict[int, int] = {}
    prev: dict[int, int] = {}
    for t in range(1, n_frames + 1):
        gts = dict(gt.at(t))
        prs = dict(pred.at(t))
        n_gt += len(gts)
        ious = {(g, p): iou(gb, pb) for g, gb in gts.items()
                for p, pb in prs.items()}
        matches = {g: p for g, p in prev.items()
                   if g in gts and p in prs and ious[g, p] >= THR}
        rest_g = [g for g in gts if g not in matches]
        rest_p = [p for p in prs if p not in set(matches.values())]
        best: dict[int, int] = {}
        best_key = (-1, -1.0)
        for cand in _one_to_one_subsets(rest_g, rest_p,
                                        lambda g, p: ious[g, p] >= THR):
            key = (len(cand), sum(ious[g, p] for g, p in cand.items()))
            if key > best_key:
                best_key, best = key, cand
        matches.update(best)
        for g, p in matches.items():
            tp += 1
            iou_sum += ious[g, p]
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
        fn += len(gts) - len(matches)
        fp += len(prs) - len(matches)
        prev = matches
    return n_gt, tp, fn, fp, idsw, iou_sum


def oracle_idf1(gt: TrajectorySet, pred: TrajectorySet, n_frames: int):
    overlap: dict[tuple[int, int], int] = {}
    for t in range(1, n_frames + 1):
        for g, gb in gt.at(t):
            for p, pb in pred.at(t):
                if iou(gb, pb) >= THR:
                    overlap[g, p] = overlap.get((g, p), 0) + 1
    idtp = 0
    gids, pids = gt.ids(), pred.ids()
    for cand in _one_to_one_subsets(gids, pids,
                                    lambda g, p: overlap.get((g, p), 0) > 0):
        idtp = max(idtp, sum(overlap[g, p] for g, p in cand.items()))
    return idtp, pred.n_boxes() - idtp, gt.n_boxes() - idtp


def oracle_hota(gt: TrajectorySet, pred: TrajectorySet, n_frames: int):
    """Per-alpha (tp, fn, fp, assoc_sum) straight from the definition."""
    gids, pids = gt.ids(), pred.ids()
    len_g = {g: len(gt.track(g)) for g in gids}
    len_p = {p: len(pred.track(p)) for p in pids}
    frames = []
    for t in range(1, n_frames + 1):
        ious = {(g, p): iou(gb, pb) for g, gb in gt.at(t)
                for p, pb in pred.at(t)}
        frames.append((dict(gt.at(t)), dict(pred.at(t)), ious))
    out = []
    for alpha in ALPHAS:
        pot: dict[tuple[int, int], int] = {}
        for _, _, ious in frames:
            for (g, p), v in ious.items():
                if v >= alpha:
                    pot[g, p] = pot.get((g, p), 0) + 1
        a_pot = {gp: c / (len_g[gp[0]] + len_p[gp[1]] - c)
                 for gp, c in pot.items()}
        tpa: dict[tuple[int, int], int] = {}
        tp = 0
        for gts, prs, ious in frames:
            best: dict[int, int] = {}
            best_w = -1.0
            for cand in _one_to_one_subsets(
                    list(gts), list(prs),
                    lambda g, p: ious[g, p] >= alpha):
                w = sum(a_pot[g, p] + 1e-8 * ious[g, p]
                        for g, p in cand.items())
                if w > best_w:
                    best_w, best = w, cand
            for g, p in best.items():
                tpa[g, p] = tpa.get((g, p), 0) + 1
                tp += 1
        assoc_sum = sum(c * c / (len_g[g] + len_p[p] - c)
                        for (g, p), c in tpa.items())
        out.append((tp, gt.n_boxes() - tp, pred.n_boxes() - tp, assoc_sum))
    return out


def random_scenario(seed: int):
    rng = np.random.default_rng(seed)
    n_frames = int(rng.integers(2, 7))

    def make_tracks(n, mimic=None):
        samples = {}
        for tid in range(1, n + 1):
            if mimic is not None and rng.uniform() < 0.6:
                src = mimic[int(rng.integers(1, len(mimic) + 1))]
                entries = [(f, Box(b.x + rng.normal(0, 2.0),
                                   b.y + rng.normal(0, 2.0), b.w, b.h))
                           for f, b in src]
            else:
                base = Box(float(rng.uniform(0, 40)), float(rng.uniform(0, 40)),
                           float(rng.uniform(8, 20)), float(rng.uniform(8, 20)))
                entries = [(f, Box(base.x + rng.normal(0, 3.0),
                                   base.y + rng.normal(0, 3.0),
                                   base.w, base.h))
                           for f in range(1, n_frames + 1)
                           if rng.uniform() < 0.8]
            if not entries:
                entries = [(1, Box(0.0, 0.0, 5.0, 5.0))]
            samples[tid] = entries
        return samples

    gt_samples = make_tracks(int(rng.integers(1, 4)))
    gt = TrajectorySet(gt_samples)
    pred = TrajectorySet(make_tracks(int(rng.integers(1, 4)),
                                     mimic={k: gt.track(k) for k in gt.ids()}))
    return gt, pred, n_frames


# ---------------------------------------------------------------------------
# hand-worked scenarios

class TestClear:
    def test_perfect_tracking(self):
        ts = straight_tracks(3, 20)
        rep = clear_metrics(ts, ts)
        assert (rep.mota, rep.motp) == (1.0, 1.0)
        assert (rep.fn, rep.fp, rep.idsw) == (0, 0, 0)
        assert rep.tp == rep.n_gt == 60

    def test_mota_600_scenario(self):
        gt = make_traj({f: [(1, (0, 0, 10, 10))] for f in range(1, 11)})
        pred_frames = {}
        for f in range(1, 5):
            pred_frames[f] = [(1, (0, 0, 10, 10))]
        for f in range(7, 11):
            pred_frames[f] = [(2, (0, 0, 10, 10))]
        pred_frames[1].append((3, (200, 200, 10, 10)))
        pred = make_traj(pred_frames)
        rep = clear_metrics(gt, pred, n_frames=10)
        assert (rep.n_gt, rep.fn, rep.fp, rep.idsw) == (10, 2, 1, 1)
        assert rep.mota == pytest.approx(0.600, abs=1e-12)

    def test_carry_over_beats_fresh_higher_iou(self):
        # the frame-1 match is kept in frame 2 although a newcomer overlaps
        # perfectly; switching would cost an id switch and is not attempted
        gt = make_traj({1: [(1, (0, 0, 10, 10))], 2: [(1, (0, 0, 10, 10))]})
        pred = make_traj({1: [(1, (0, 2.5, 10, 10))],
                          2: [(1, (0, 2.5, 10, 10)), (2, (0, 0, 10, 10))]})
        rep = clear_metrics(gt, pred, n_frames=2)
        assert rep.tp == 2
        assert rep.fp == 1
        assert rep.idsw == 0
        assert rep.motp == pytest.approx(0.6, abs=1e-12)

    def test_idsw_against_most_recent_not_previous_frame(self):
        # gt vanishes for two frames; on return it meets a new id: 1 switch
        gt = make_traj({1: [(1, (0, 0, 10, 10))],
                        4: [(1, (0, 0, 10, 10))]})
        pred = make_traj({1: [(1, (0, 0, 10, 10))],
                          4: [(2, (0, 0, 10, 10))]})
        assert clear_metrics(gt, pred, n_frames=4).idsw == 1
        # same gap but the original id returns: no switch
        pred2 = make_traj({1: [(1, (0, 0, 10, 10))],
                           4: [(1, (0, 0, 10, 10))]})
        assert clear_metrics(gt, pred2, n_frames=4).idsw == 0

    def test_empty_prediction(self):
        gt = straight_tracks(2, 5)
        rep = clear_metrics(gt, TrajectorySet({}), n_frames=5)
        assert rep.fn == rep.n_gt == 10
        assert rep.mota == 0.0
        assert rep.motp == 0.0

    def test_frame_range_enforced(self):
        gt = straight_tracks(1, 5)
        with pytest.raises(FrameRangeError):
            clear_metrics(gt, straight_tracks(1, 9), n_frames=5)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_enumeration_oracle(self, seed):
        gt, pred, n = random_scenario(seed)
        rep = clear_metrics(gt, pred, n_frames=n)
        n_gt, tp, fn, fp, idsw, iou_sum = oracle_clear(gt, pred, n)
        assert (rep.n_gt, rep.tp, rep.fn, rep.fp, rep.idsw) == \
            (n_gt, tp, fn, fp, idsw)
        assert rep.iou_sum == pytest.approx(iou_sum, abs=1e-12)


class TestIdf1:
    def test_perfect(self):
        ts = straight_tracks(2, 8)
        rep = idf1(ts, ts)
        assert rep.idf1 == 1.0 and rep.idfp == 0 and rep.idfn == 0

    def test_five_of_ten_frames(self):
        gt = make_traj({f: [(1, (0, 0, 10, 10))] for f in range(1, 11)})
        pred = make_traj({f: [(1, (0, 0, 10, 10))] for f in range(1, 6)})
        rep = idf1(gt, pred, n_frames=10)
        assert (rep.idtp, rep.idfp, rep.idfn) == (5, 0, 5)
        assert rep.idf1 == pytest.approx(0.6667, abs=1e-4)

    def test_identity_split_chooses_larger_half(self):
        gt = make_traj({f: [(1, (0, 0, 10, 10))] for f in range(1, 11)})
        pred_frames = {f: [(1, (0, 0, 10, 10))] for f in range(1, 7)}
        pred_frames.update({f: [(2, (0, 0, 10, 10))] for f in range(7, 11)})
        rep = idf1(gt, make_traj(pred_frames), n_frames=10)
        # global matching keeps the 6-frame pred; the 4-frame one is all FP
        assert (rep.idtp, rep.idfp, rep.idfn) == (6, 4, 4)

    def test_both_empty_is_vacuously_perfect(self):
        rep = idf1(TrajectorySet({}), TrajectorySet({}), n_frames=3)
        assert rep.idf1 == 1.0

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_enumeration_oracle(self, seed):
        gt, pred, n = random_scenario(seed + 1000)
        rep = idf1(gt, pred, n_frames=n)
        assert (rep.idtp, rep.idfp, rep.idfn) == oracle_idf1(gt, pred, n)


class TestHota:
    def test_perfect(self):
        ts = straight_tracks(2, 10)
        rep = hota(ts, ts)
        assert rep.hota == pytest.approx(1.0, abs=1e-15)
        assert rep.deta == 1.0 and rep.assa == 1.0

    def test_single_detection_iou_060(self):
        gt = make_traj({1: [(1, (0, 0, 10, 10))]})
        pred = make_traj({1: [(1, (0, 2.5, 10, 10))]})
        rep = hota(gt, pred, n_frames=1)
        # IoU exactly 75/125 = 0.6 clears 12 of the 19 thresholds
        assert rep.hota == pytest.approx(12.0 / 19.0, abs=1e-12)
        matched = [a for a in rep.per_alpha if a.tp == 1]
        assert len(matched) == 12
        assert all(a.hota == 1.0 for a in matched)

    def test_split_track_assa_sqrt_half(self):
        gt = make_traj({f: [(1, (0, 0, 10, 10))] for f in range(1, 11)})
        pred_frames = {f: [(1, (0, 0, 10, 10))] for f in range(1, 6)}
        pred_frames.update({f: [(2, (0, 0, 10, 10))] for f in range(6, 11)})
        rep = hota(gt, make_traj(pred_frames), n_frames=10)
        for a in rep.per_alpha:
            assert a.deta == 1.0
            assert a.assa == pytest.approx(0.5, abs=1e-12)
            assert a.hota == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_alpha_grid(self):
        assert len(ALPHAS) == 19
        assert ALPHAS[0] == 0.05 and ALPHAS[-1] == 0.95
        assert ALPHAS[11] == 0.6  # the boundary the 12/19 case relies on

    @pytest.mark.parametrize("seed", range(20))
    def test_per_alpha_identity(self, seed):
        gt, pred, n = random_scenario(seed + 2000)
        for a in hota(gt, pred, n_frames=n).per_alpha:
            assert abs(a.hota ** 2 - a.deta * a.assa) <= 1e-12

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_enumeration_oracle(self, seed):
        gt, pred, n = random_scenario(seed + 3000)
        rep = hota(gt, pred, n_frames=n)
        expect = oracle_hota(gt, pred, n)
        for a, (tp, fn, fp, assoc_sum) in zip(rep.per_alpha, expect):
            assert (a.tp, a.fn, a.fp) == (tp, fn, fp)
            assert a.assoc_sum == pytest.approx(assoc_sum, abs=1e-9)


class TestPoolingAndEvaluate:
    def test_pooled_counts_are_sums(self):
        parts = []
        for seed in range(4):
            gt, pred, n = random_scenario(seed + 4000)
            parts.append(evaluate_pair(gt, pred, n_frames=n))
        pooled = pool_scores(parts)
        assert pooled.clear.n_gt == sum(p.clear.n_gt for p in parts)
        assert pooled.clear.idsw == sum(p.clear.idsw for p in parts)
        assert pooled.ident.idtp == sum(p.ident.idtp for p in parts)
        for k in range(len(ALPHAS)):
            assert pooled.hota.per_alpha[k].tp == \
                sum(p.hota.per_alpha[k].tp for p in parts)

    def test_pooling_identity_single(self):
        gt, pred, n = random_scenario(4242)
        one = evaluate_pair(gt, pred, n_frames=n)
        assert pool_clear([one.clear]) == one.clear
        assert pool_id([one.ident]) == one.ident
        assert pool_hota([one.hota]) == one.hota

    def _items(self, platforms):
        items = []
        for k, plat in enumerate(platforms):
            gt, pred, n = random_scenario(5000 + k)
            items.append(SequenceItem(name=f"s{k:02d}", gt=gt, pred=pred,
                                      n_frames=n, platform=plat))
        return items

    def test_protocol_1_single_group(self):
        report = evaluate(self._items(["UAV", "handheld", "unknown"]),
                          protocol=1)
        assert [g.name for g in report.groups] == ["all"]
        assert len(report.group("all").sequences) == 3

    def test_protocol_2_groups_by_platform(self):
        report = evaluate(self._items(
            ["UAV", "handheld", "handheld", "surveillance"]), protocol=2)
        assert [g.name for g in report.groups] == \
            ["handheld", "surveillance", "UAV", "all"]
        assert len(report.group("handheld").sequences) == 2
        assert len(report.group("all").sequences) == 4

    def test_protocol_2_all_pool_equals_protocol_1(self):
        items = self._items(["UAV", "handheld", "surveillance"])
        p1 = evaluate(items, protocol=1).group("all").pooled
        p2 = evaluate(items, protocol=2).group("all").pooled
        assert p1.clear == p2.clear and p1.ident == p2.ident

    def test_duplicate_names_rejected(self):
        items = self._items(["UAV"]) * 2
        with pytest.raises(ValueError):
            evaluate(items, protocol=1)

    def test_precomputed_scores_are_used(self):
        items = self._items(["UAV"])
        fake = evaluate_pair(items[0].gt, items[0].gt,
                             n_frames=items[0].n_frames)  # perfect on purpose
        report = evaluate(items, protocol=1, scores={items[0].name: fake})
        assert report.group("all").pooled.clear.mota == 1.0

    @given(st.integers(0, 3000))
    @settings(max_examples=40, deadline=None)
    def test_relabeling_invariance(self, seed):
        gt, pred, n = random_scenario(seed)
        rng = np.random.default_rng(seed + 77)

        def relabel(ts):
            ids = ts.ids()
            perm = rng.permutation(len(ids))
            return TrajectorySet({int(perm[k]) + 1: list(ts.track(tid))
                                  for k, tid in enumerate(ids)})

        a = evaluate_pair(gt, pred, n_frames=n)
        b = evaluate_pair(relabel(gt), relabel(pred), n_frames=n)
        assert (a.clear.n_gt, a.clear.tp, a.clear.fn, a.clear.fp,
                a.clear.idsw) == (b.clear.n_gt, b.clear.tp, b.clear.fn,
                                  b.clear.fp, b.clear.idsw)
        # iou_sum accumulates in id order, so only bit-level drift is allowed
        assert a.clear.iou_sum == pytest.approx(b.clear.iou_sum, abs=1e-12)
        assert a.ident == b.ident
        for x, y in zip(a.hota.per_alpha, b.hota.per_alpha):
            assert (x.tp, x.fn, x.fp) == (y.tp, y.fn, y.fp)
            assert x.assoc_sum == pytest.approx(y.assoc_sum, abs=1e-12)
