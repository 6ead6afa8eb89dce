"""Synthetic count data with planted joint peaks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genomic import ProblemMatrix
from .segmentation import max_bin_size


@dataclass(frozen=True)
class PlantedProblem:
    problem: ProblemMatrix
    first_change: int
    last_change: int
    peaked: tuple[int, ...]


def planted_problem(rng: np.random.Generator, B: int, S: int, first: int, last: int,
                    peaked, background: float = 2.0, peak: float = 10.0,
                    window_start: int = 0, sample_ids=()) -> PlantedProblem:
    """Poisson counts at rate ``background`` with rate ``peak`` on
    ``[first, last)`` in the ``peaked`` samples."""
    rates = np.full((B, S), float(background))
    peaked = tuple(sorted(peaked))
    for s in peaked:
        rates[first:last, s] = peak
    counts = rng.poisson(rates)
    return PlantedProblem(ProblemMatrix(counts, window_start, tuple(sample_ids)),
                          first, last, peaked)


def random_planted_problem(rng: np.random.Generator, max_bases: int = 100,
                           max_samples: int = 4, min_bases: int = 8,
                           min_flank: int | None = None) -> PlantedProblem:
    """Random size, rates, peak location and peaked samples.

    Each background flank is at least ``min_flank`` bases; by default one
    bin at the coarsest zoom level, so the peak is interior at every level.
    """
    B = int(rng.integers(min_bases, max_bases + 1))
    S = int(rng.integers(1, max_samples + 1))
    flank = max_bin_size(B) if min_flank is None else max(1, min_flank)
    flank = min(flank, (B - 1) // 2)
    width = int(rng.integers(1, B - 2 * flank + 1))
    first = int(rng.integers(flank, B - flank - width + 1))
    n_peaked = int(rng.integers(1, S + 1))
    peaked = rng.choice(S, size=n_peaked, replace=False)
    background = float(rng.uniform(0.5, 4.0))
    peak = background * float(rng.uniform(2.0, 8.0))
    return planted_problem(rng, B, S, first, first + width, peaked, background, peak)


def single_peak_profile(rng: np.random.Generator, B: int, background: float = 2.0,
                        peak: float = 10.0) -> np.ndarray:
    """One sample: background with a peak over the middle third."""
    rates = np.full(B, float(background))
    rates[B // 3:2 * B // 3] = peak
    return rng.poisson(rates)
