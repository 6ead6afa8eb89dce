"""Timing of the joint solver against the exact quadratic-time solver."""
from __future__ import annotations

import time

import numpy as np

from .genomic import ProblemMatrix
from .oracle import three_segment_dp
from .segmentation import DEFAULT_ZOOM_FACTOR, fit_model_sequence
from .simulate import single_peak_profile

DEFAULT_SIZES = (10, 100, 1_000, 10_000, 100_000, 1_000_000)
JOINT_ZOOM = "JointZoom"
EXACT_DP = "exact3SegmentDP"


def best_time(fn, repetitions: int) -> float:
    best = float("inf")
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(sizes=DEFAULT_SIZES, zoom_factor: int = DEFAULT_ZOOM_FACTOR,
              repetitions: int = 3, seed: int = 0, dp_max_size: int = 10_000,
              background: float = 2.0, peak: float = 10.0) -> list[tuple[int, float, str]]:
    """Best-of-``repetitions`` wall time per problem size.

    The joint solver is timed from the raw count vector (problem
    construction plus the full model sequence); the exact solver only runs
    up to ``dp_max_size`` bases.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for B in sizes:
        if B < 10:
            raise ValueError(f"bench sizes must be >= 10, got {B}")
        z = single_peak_profile(rng, int(B), background, peak)
        rows.append((int(B), best_time(lambda: fit_model_sequence(ProblemMatrix(z), zoom_factor),
                                       repetitions), JOINT_ZOOM))
        if B <= dp_max_size:
            rows.append((int(B), best_time(lambda: three_segment_dp(z), repetitions), EXACT_DP))
    return rows


def loglog_slope(sizes, seconds) -> float:
    """Least-squares slope of ``log(seconds)`` against ``log(size)``."""
    x, y = np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(seconds, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
