"""Shared builders for the test suite.

Most tests construct tiny TrajectorySets or AnnotationSets by hand; the
helpers here keep that terse.  Nothing in this file asserts anything.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from dualmot.assignment import Box
from dualmot.data import AnnotationRecord, AnnotationSet, TrajectorySet


def make_traj(samples: dict[int, list[tuple[int, tuple[float, float, float, float]]]]) -> TrajectorySet:
    """Build a TrajectorySet from {frame: [(track_id, (x, y, w, h)), ...]}.

    Frame-major input reads naturally in scenario tables; TrajectorySet
    itself is track-major, so transpose here.
    """
    by_track: dict[int, list[tuple[int, Box]]] = {}
    for frame, entries in samples.items():
        for tid, xywh in entries:
            by_track.setdefault(tid, []).append((frame, Box(*xywh)))
    return TrajectorySet(by_track)


def straight_tracks(n_tracks: int, n_frames: int, spacing: float = 40.0,
                    step: float = 2.0, size: float = 10.0) -> TrajectorySet:
    """Disjoint constant-velocity tracks, one box per track per frame."""
    samples: dict[int, list[tuple[int, Box]]] = {}
    for t in range(n_tracks):
        samples[t + 1] = [(f, Box(10.0 + step * (f - 1), 10.0 + spacing * t,
                                  size, size))
                          for f in range(1, n_frames + 1)]
    return TrajectorySet(samples)


def records_to_set(rows) -> AnnotationSet:
    return AnnotationSet([AnnotationRecord(*r) for r in rows])


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Exhaustive minimum over row-to-column injections (n <= m)."""
    n, m = cost.shape
    assert n <= m <= 9
    best = np.inf
    for perm in itertools.permutations(range(m), n):
        best = min(best, float(sum(cost[i, j] for i, j in enumerate(perm))))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
