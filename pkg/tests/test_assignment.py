"""Assignment solver against a brute-force oracle, plus geometry checks."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualmot.assignment import (Box, hungarian, iou, iou_matrix,
                                match_with_threshold)
from tests.conftest import brute_force_min_cost


def boxes_strategy():
    coord = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)
    side = st.floats(0.1, 40.0, allow_nan=False, allow_infinity=False)
    return st.builds(Box, coord, coord, side, side)


class TestIou:
    def test_identical_boxes(self):
        b = Box(3.0, 4.0, 10.0, 12.0)
        assert iou(b, b) == 1.0

    def test_known_half_overlap(self):
        # 10x10 boxes offset by 5 in x: inter 50, union 150
        a = Box(0.0, 0.0, 10.0, 10.0)
        b = Box(5.0, 0.0, 10.0, 10.0)
        assert iou(a, b) == pytest.approx(50.0 / 150.0, abs=1e-15)

    def test_disjoint_and_touching(self):
        a = Box(0.0, 0.0, 10.0, 10.0)
        assert iou(a, Box(20.0, 0.0, 10.0, 10.0)) == 0.0
        # edge contact has zero intersection area
        assert iou(a, Box(10.0, 0.0, 10.0, 10.0)) == 0.0

    def test_degenerate_is_zero(self):
        a = Box(0.0, 0.0, 10.0, 10.0)
        assert iou(a, Box(0.0, 0.0, 0.0, 10.0)) == 0.0
        assert iou(Box(0.0, 0.0, -1.0, 5.0), a) == 0.0

    @given(boxes_strategy(), boxes_strategy())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(st.lists(boxes_strategy(), max_size=5),
           st.lists(boxes_strategy(), max_size=5))
    def test_matrix_matches_scalar(self, rows, cols):
        m = iou_matrix(rows, cols)
        assert m.shape == (len(rows), len(cols))
        for i, a in enumerate(rows):
            for j, b in enumerate(cols):
                assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


class TestHungarian:
    def test_trivial_cases(self):
        assert hungarian(np.zeros((0, 3))).pairs == ()
        one = hungarian([[7.0]])
        assert one.pairs == ((0, 0),) and one.total_cost == 7.0

    def test_known_matrix(self):
        cost = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
        res = hungarian(cost)
        assert res.total_cost == 5.0
        assert res.pairs == ((0, 1), (1, 0), (2, 2))

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros(3))
        with pytest.raises(ValueError):
            hungarian([[np.inf, 1.0], [1.0, 2.0]])

    def test_oracle_square_seeded(self):
        rng = np.random.default_rng(11)
        for n in range(2, 6):
            for _ in range(50):
                cost = rng.integers(0, 20, size=(n, n)).astype(float)
                res = hungarian(cost)
                assert res.total_cost == brute_force_min_cost(cost)

    def test_oracle_rectangular_seeded(self):
        rng = np.random.default_rng(12)
        for nr, nc in [(2, 5), (3, 4), (4, 6), (5, 3), (4, 2)]:
            for _ in range(40):
                cost = rng.uniform(0.0, 10.0, size=(nr, nc))
                res = hungarian(cost)
                assert len(res.pairs) == min(nr, nc)
                if nr <= nc:
                    expect = brute_force_min_cost(cost)
                else:
                    expect = brute_force_min_cost(cost.T)
                assert res.total_cost == pytest.approx(expect, abs=1e-12)

    def test_tie_prefers_low_row_low_col(self):
        # every assignment costs 2: the solver must settle on the identity
        res = hungarian(np.ones((3, 3)) * 2.0 / 3.0)
        assert res.pairs == ((0, 0), (1, 1), (2, 2))

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(13)
        cost = rng.integers(0, 4, size=(6, 6)).astype(float)
        first = hungarian(cost)
        for _ in range(5):
            again = hungarian(cost)
            assert again.pairs == first.pairs
            assert again.total_cost == first.total_cost

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_optimality_property(self, nr, nc, seed):
        rng = np.random.default_rng(seed)
        cost = rng.uniform(-5.0, 5.0, size=(nr, nc))
        res = hungarian(cost)
        rows = [i for i, _ in res.pairs]
        cols = [j for _, j in res.pairs]
        assert len(set(rows)) == len(rows)
        assert len(set(cols)) == len(cols)
        wide = cost if nr <= nc else cost.T
        assert res.total_cost == pytest.approx(brute_force_min_cost(wide),
                                               abs=1e-12)

    @given(st.integers(2, 5), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_row_permutation_consistency(self, n, seed):
        # permuting rows permutes the solution, total cost is unchanged
        rng = np.random.default_rng(seed)
        cost = rng.uniform(0.0, 9.0, size=(n, n))
        perm = rng.permutation(n)
        base = hungarian(cost)
        shuffled = hungarian(cost[perm])
        assert shuffled.total_cost == pytest.approx(base.total_cost, abs=1e-12)


class TestMatchWithThreshold:
    def test_threshold_excludes_pairs(self):
        sim = np.array([[0.9, 0.4], [0.3, 0.8]])
        assert match_with_threshold(sim, 0.5) == ((0, 0), (1, 1))
        assert match_with_threshold(sim, 0.85) == ((0, 0),)
        assert match_with_threshold(sim, 0.95) == ()

    def test_prefers_total_over_greedy(self):
        # greedy would grab (0,0)=0.9 and strand row 1; optimum is 0.8+0.7
        sim = np.array([[0.9, 0.0], [0.8, 0.0], [0.0, 0.0]])
        sim[0, 1] = 0.7
        pairs = match_with_threshold(sim, 0.5)
        assert pairs == ((0, 1), (1, 0))

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            match_with_threshold(np.ones((2, 2)), 0.0)
        with pytest.raises(ValueError):
            match_with_threshold(np.ones((2, 2)), 1.5)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000),
           st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
    @settings(max_examples=60, deadline=None)
    def test_maximizes_total_similarity(self, nr, nc, seed, threshold):
        rng = np.random.default_rng(seed)
        sim = rng.uniform(0.0, 1.0, size=(nr, nc))
        pairs = match_with_threshold(sim, threshold)
        for i, j in pairs:
            assert sim[i, j] >= threshold
        total = sum(sim[i, j] for i, j in pairs)
        # brute force over all one-to-one subsets of eligible pairs
        best = 0.0
        wide = sim if nr <= nc else sim.T
        for k in range(min(nr, nc), 0, -1):
            for rows in itertools.combinations(range(wide.shape[0]), k):
                for cols in itertools.permutations(range(wide.shape[1]), k):
                    cand = [(r, c) for r, c in zip(rows, cols)
                            if wide[r, c] >= threshold]
                    best = max(best, sum(wide[r, c] for r, c in cand))
        assert total == pytest.approx(best, abs=1e-12)

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_match_count_monotone_in_threshold(self, nr, nc, seed):
        rng = np.random.default_rng(seed)
        sim = rng.uniform(0.0, 1.0, size=(nr, nc))
        counts = [len(match_with_threshold(sim, t))
                  for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert counts == sorted(counts, reverse=True)
