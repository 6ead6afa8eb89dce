"""PeakSegJoint models and the JointZoom coarse-to-fine solver.

A joint model places one common peak ``[first_change, last_change)`` (base
offsets inside the problem) in ``p`` of the ``S`` samples. Every peaked
sample gets three segments (background, peak, background) whose means are
the segment averages; the other samples get a single flat segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .genomic import BinnedProblem, ProblemMatrix, bin_problem, n_bins

DEFAULT_ZOOM_FACTOR = 2
DEFAULT_MIN_BINS = 6


def poisson_loss(mean: float, total: float, width: float) -> float:
    """Poisson loss ``width * mean - total * log(mean)`` of one segment.

    Uses ``0 log 0 = 0``; a zero mean under positive counts is infinitely bad.
    """
    if mean < 0:
        raise ValueError(f"negative mean {mean}")
    if total < 0 or width < 0:
        raise ValueError("total and width must be non-negative")
    if total == 0:
        return width * mean
    if mean == 0:
        return math.inf
    return width * mean - total * math.log(mean)


def _ml_loss(total: np.ndarray, width: np.ndarray) -> np.ndarray:
    # Loss at the maximum-likelihood mean total / width.
    with np.errstate(divide="ignore", invalid="ignore"):
        loss = total - total * np.log(total / width)
    return np.where(total > 0, loss, 0.0)


def peak_indicator(means: Sequence[float]) -> np.ndarray:
    """Cumulative sum of signs of changes, starting at 0 on the first base."""
    means = np.asarray(means, dtype=float)
    if means.size == 0:
        raise ValueError("empty mean vector")
    out = np.zeros(means.size, dtype=np.int64)
    np.cumsum(np.sign(np.diff(means)).astype(np.int64), out=out[1:])
    return out


def segments_and_peaks(means: Sequence[float]) -> tuple[int, int]:
    """Number of constant segments and ``(segments - 1) // 2`` peaks."""
    means = np.asarray(means)
    if means.size == 0:
        raise ValueError("empty mean vector")
    segments = 1 + int(np.count_nonzero(means[1:] != means[:-1]))
    return segments, (segments - 1) // 2


def max_bin_size(B: int, zoom_factor: int = DEFAULT_ZOOM_FACTOR,
                 min_bins: int = DEFAULT_MIN_BINS) -> int:
    """Largest power of ``zoom_factor`` leaving at least ``min_bins`` bins."""
    if zoom_factor < 2:
        raise ValueError(f"zoom factor must be >= 2, got {zoom_factor}")
    best, size = 1, zoom_factor
    while n_bins(B, size) >= min_bins:
        best = size
        size *= zoom_factor
    return best


def zoom_schedule(B: int, zoom_factor: int = DEFAULT_ZOOM_FACTOR,
                  min_bins: int = DEFAULT_MIN_BINS) -> list[int]:
    """Bin sizes visited by :func:`joint_zoom`, coarsest first."""
    sizes = [max_bin_size(B, zoom_factor, min_bins)]
    while sizes[-1] > 1:
        sizes.append(sizes[-1] // zoom_factor)
    return sizes


def n_grid_candidates(b: int) -> int:
    return math.comb(b - 1, 2)


@dataclass(frozen=True, order=True)
class PeakInterval:
    first_change: int
    last_change: int

    def __post_init__(self):
        if not 0 < self.first_change < self.last_change:
            raise ValueError(f"invalid peak interval [{self.first_change}, {self.last_change})")

    @property
    def width(self) -> int:
        return self.last_change - self.first_change

    def scaled(self, factor: int) -> "PeakInterval":
        return PeakInterval(self.first_change * factor, self.last_change * factor)


@dataclass(frozen=True)
class SampleFit:
    has_peak: bool
    mean_left: float
    mean_peak: float
    mean_right: float
    loss: float


@dataclass(frozen=True)
class JointModel:
    p: int
    peak: Optional[PeakInterval]
    fits: tuple[SampleFit, ...]
    total_loss: float

    @property
    def samples(self) -> tuple[int, ...]:
        """Indices of the peaked samples."""
        return tuple(s for s, fit in enumerate(self.fits) if fit.has_peak)

    def mean_matrix(self, B: int) -> np.ndarray:
        means = np.empty((B, len(self.fits)))
        for s, fit in enumerate(self.fits):
            if fit.has_peak:
                f, l = self.peak.first_change, self.peak.last_change
                means[:f, s] = fit.mean_left
                means[f:l, s] = fit.mean_peak
                means[l:, s] = fit.mean_right
            else:
                means[:, s] = fit.mean_peak
        return means

    def to_dict(self, problem: ProblemMatrix | None = None) -> dict:
        offset = problem.window_start if problem is not None else 0
        ids = problem.sample_ids if problem is not None else tuple(range(len(self.fits)))
        out = {"p": self.p, "loss": self.total_loss, "peak": None}
        if self.peak is not None:
            out["peak"] = {"start": offset + self.peak.first_change,
                           "end": offset + self.peak.last_change}
        out["samples"] = [
            {"sampleId": sid, "hasPeak": fit.has_peak, "meanLeft": fit.mean_left,
             "meanPeak": fit.mean_peak, "meanRight": fit.mean_right, "loss": fit.loss}
            for sid, fit in zip(ids, self.fits)
        ]
        return out


@dataclass(frozen=True)
class ModelSequence:
    """Models for ``p = 0..S``; ``None`` marks an infeasible model size."""

    models: tuple[Optional[JointModel], ...]

    @property
    def losses(self) -> list[Optional[float]]:
        return [None if m is None else m.total_loss for m in self.models]

    def __getitem__(self, p: int) -> Optional[JointModel]:
        return self.models[p]

    def __len__(self):
        return len(self.models)

    def to_dict(self, problem: ProblemMatrix | None = None) -> dict:
        out = {"losses": self.losses, "models": [None if m is None else m.to_dict(problem)
                                                for m in self.models]}
        if problem is not None:
            out = {"chrom": problem.chrom, "start": problem.window_start,
                   "end": problem.window_end, "sampleIds": list(problem.sample_ids), **out}
        return out


def flat_losses(problem: ProblemMatrix) -> np.ndarray:
    totals = problem.cumsum[-1]
    return _ml_loss(totals, np.full(problem.S, float(problem.B)))


def score_candidates(cumsum: np.ndarray, cumwidth: np.ndarray, firsts: np.ndarray,
                     lasts: np.ndarray, flat: np.ndarray, p: int,
                     samples: Sequence[int] | None = None):
    """Score candidate peaks given as indices into prefix-sum arrays.

    ``cumsum`` is ``(n + 1) x S`` and ``cumwidth`` has length ``n + 1``; a
    candidate ``(f, l)`` has segments ``[0, f)``, ``[f, l)``, ``[l, n)``. A
    sample is eligible iff all three segments are non-empty and its peak mean
    strictly exceeds both background means. With ``samples=None`` the ``p``
    eligible samples with the largest loss decrease are chosen (ties to the
    lower index); otherwise the given samples must all be eligible.

    Returns:
        ``(total_loss, chosen)`` with ``total_loss`` of shape ``(C,)`` (``inf``
        where infeasible) and ``chosen`` a ``(C, S)`` boolean mask.
    """
    n = len(cumwidth) - 1
    left_t, peak_t = cumsum[firsts], cumsum[lasts] - cumsum[firsts]
    right_t = cumsum[n] - cumsum[lasts]
    left_w = cumwidth[firsts]
    peak_w = cumwidth[lasts] - left_w
    right_w = cumwidth[n] - cumwidth[lasts]
    with np.errstate(divide="ignore", invalid="ignore"):
        m_left = left_t / left_w[:, None]
        m_peak = peak_t / peak_w[:, None]
        m_right = right_t / right_w[:, None]
    nonempty = (left_w > 0) & (peak_w > 0) & (right_w > 0)
    eligible = nonempty[:, None] & (m_peak > m_left) & (m_peak > m_right)
    peak_loss = (_ml_loss(left_t, left_w[:, None]) + _ml_loss(peak_t, peak_w[:, None])
                 + _ml_loss(right_t, right_w[:, None]))
    decrease = flat[None, :] - peak_loss
    flat_sum = flat.sum()
    n_cand, S = decrease.shape

    if samples is None:
        if p == 0:
            return np.full(n_cand, flat_sum), np.zeros((n_cand, S), dtype=bool)
        dec = np.where(eligible, decrease, -np.inf)
        order = np.argsort(-dec, axis=1, kind="stable")[:, :p]
        top = np.take_along_axis(dec, order, axis=1)
        feasible = np.isfinite(top).all(axis=1)
        chosen = np.zeros((n_cand, S), dtype=bool)
        np.put_along_axis(chosen, order, True, axis=1)
        total = np.where(feasible, flat_sum - np.where(feasible[:, None], top, 0.0).sum(axis=1),
                         np.inf)
    else:
        mask = np.zeros(S, dtype=bool)
        mask[list(samples)] = True
        feasible = eligible[:, mask].all(axis=1)
        total = np.where(feasible, flat_sum - decrease[:, mask].sum(axis=1), np.inf)
        chosen = np.broadcast_to(mask, (n_cand, S))
    return total, chosen


def best_candidate(total: np.ndarray) -> int | None:
    """Index of the minimum finite loss; the first one wins ties."""
    if total.size == 0 or not np.isfinite(total).any():
        return None
    return int(np.argmin(total))


@dataclass(frozen=True)
class GridResult:
    """Best grid-search candidate; ``first``/``last`` are bin indices."""

    first: Optional[int]
    last: Optional[int]
    samples: tuple[int, ...]
    total_loss: float
    bin_size: int
    n_candidates: int

    @property
    def peak(self) -> Optional[PeakInterval]:
        if self.first is None:
            return None
        return PeakInterval(self.first, self.last)

    @property
    def peak_bases(self) -> Optional[PeakInterval]:
        if self.first is None:
            return None
        return PeakInterval(self.first * self.bin_size, self.last * self.bin_size)


def grid_candidates(b: int) -> tuple[np.ndarray, np.ndarray]:
    """All bin-boundary pairs ``1 <= first < last <= b - 1``, lexicographic."""
    firsts, lasts = np.triu_indices(b - 1, k=1)
    return firsts + 1, lasts + 1


def grid_search(binned: BinnedProblem, p: int) -> GridResult | None:
    """Exhaustive search over peaks with boundaries on the bin grid.

    Returns ``None`` when no candidate has ``p`` eligible samples.
    """
    S, b = binned.S, binned.b
    if not 0 <= p <= S:
        raise ValueError(f"p must be in 0..{S}, got {p}")
    cumsum = np.zeros((b + 1, S))
    np.cumsum(binned.bin_totals, axis=0, out=cumsum[1:])
    cumwidth = np.zeros(b + 1)
    np.cumsum(binned.bin_widths, out=cumwidth[1:])
    flat = _ml_loss(cumsum[-1], np.full(S, cumwidth[-1]))
    firsts, lasts = grid_candidates(b)
    if p == 0:
        return GridResult(None, None, (), float(flat.sum()), binned.bin_size, len(firsts))
    total, chosen = score_candidates(cumsum, cumwidth, firsts, lasts, flat, p)
    best = best_candidate(total)
    if best is None:
        return None
    return GridResult(int(firsts[best]), int(lasts[best]), tuple(int(s) for s in np.flatnonzero(chosen[best])),
                      float(total[best]), binned.bin_size, len(firsts))


def near_peak_candidates(peak: PeakInterval, bin_size: int, zoom_factor: int, B: int):
    """Refinement candidates around a coarse peak, in base units.

    Each boundary moves over ``2 * zoom_factor`` fine positions, from one
    coarse bin before it up to the last fine position inside the coarse bin
    after it. Out-of-range positions and ``first >= last`` pairs are dropped.
    Returns ``(firsts, lasts, n_before_clamping)``.
    """
    offsets = np.arange(-zoom_factor, zoom_factor) * bin_size
    f = peak.first_change + offsets
    l = peak.last_change + offsets
    ff, ll = np.meshgrid(f, l, indexing="ij")
    ff, ll = ff.ravel(), ll.ravel()
    keep = (ff >= 1) & (ll <= B - 1) & (ff < ll)
    return ff[keep], ll[keep], len(offsets) ** 2


def search_near_peak(problem: ProblemMatrix, samples: Sequence[int], bin_size: int,
                     peak: PeakInterval, zoom_factor: int = DEFAULT_ZOOM_FACTOR) -> PeakInterval:
    """Refine a coarse peak at ``bin_size`` keeping the peaked samples fixed.

    ``peak`` is in base units on the grid of ``bin_size * zoom_factor``. If no
    refined candidate is feasible the incoming peak is returned.
    """
    firsts, lasts, _ = near_peak_candidates(peak, bin_size, zoom_factor, problem.B)
    if len(firsts) == 0:
        return peak
    cumwidth = np.arange(problem.B + 1, dtype=np.float64)
    total, _ = score_candidates(problem.cumsum, cumwidth, firsts, lasts,
                                flat_losses(problem), len(samples), samples)
    best = best_candidate(total)
    if best is None:
        return peak
    return PeakInterval(int(firsts[best]), int(lasts[best]))


def build_model(problem: ProblemMatrix, peak: Optional[PeakInterval],
                samples: Sequence[int]) -> JointModel:
    """Exact maximum-likelihood means and losses for a fixed peak and sample set."""
    B = problem.B
    cs = problem.cumsum
    peaked = set(int(s) for s in samples)
    fits = []
    for s in range(problem.S):
        total = float(cs[B, s])
        if s in peaked:
            f, l = peak.first_change, peak.last_change
            tl, tp, tr = float(cs[f, s]), float(cs[l, s] - cs[f, s]), float(cs[B, s] - cs[l, s])
            ml, mp, mr = tl / f, tp / (l - f), tr / (B - l)
            loss = (poisson_loss(ml, tl, f) + poisson_loss(mp, tp, l - f)
                    + poisson_loss(mr, tr, B - l))
            fits.append(SampleFit(True, ml, mp, mr, loss))
        else:
            m = total / B
            fits.append(SampleFit(False, m, m, m, poisson_loss(m, total, B)))
    return JointModel(len(peaked), peak if peaked else None, tuple(fits),
                      float(sum(f.loss for f in fits)))


def flat_model(problem: ProblemMatrix) -> JointModel:
    return build_model(problem, None, ())


def joint_zoom(problem: ProblemMatrix, p: int, zoom_factor: int = DEFAULT_ZOOM_FACTOR,
               min_bins: int = DEFAULT_MIN_BINS, trace: list | None = None) -> JointModel | None:
    """Approximate PeakSegJoint model with ``p`` peaked samples.

    Grid search at the coarsest bin size, then refinement at each finer
    level down to single bases. ``trace``, if given, receives one
    ``(bin_size, n_candidates, n_evaluated)`` tuple per level.
    """
    if zoom_factor < 2:
        raise ValueError(f"zoom factor must be >= 2, got {zoom_factor}")
    if not 0 <= p <= problem.S:
        raise ValueError(f"p must be in 0..{problem.S}, got {p}")
    if p == 0:
        return flat_model(problem)
    bin_size = max_bin_size(problem.B, zoom_factor, min_bins)
    grid = grid_search(bin_problem(problem, bin_size), p)
    if trace is not None:
        trace.append((bin_size, grid.n_candidates if grid else n_grid_candidates(
            n_bins(problem.B, bin_size)), None))
    if grid is None:
        return None
    peak, samples = grid.peak_bases, grid.samples
    while bin_size > 1:
        bin_size //= zoom_factor
        if trace is not None:
            firsts, _, n_raw = near_peak_candidates(peak, bin_size, zoom_factor, problem.B)
            trace.append((bin_size, n_raw, len(firsts)))
        peak = search_near_peak(problem, samples, bin_size, peak, zoom_factor)
    return build_model(problem, peak, samples)


def fit_model_sequence(problem: ProblemMatrix, zoom_factor: int = DEFAULT_ZOOM_FACTOR,
                       min_bins: int = DEFAULT_MIN_BINS) -> ModelSequence:
    return ModelSequence(tuple(joint_zoom(problem, p, zoom_factor, min_bins)
                               for p in range(problem.S + 1)))


def check_constraints(model: JointModel, B: int) -> list[str]:
    """Check a model against the PeakSegJoint constraints.

    Rebuilds each sample's mean vector and inspects it with
    :func:`segments_and_peaks` and :func:`peak_indicator`. Returns a list of
    violations, empty when the model is valid.
    """
    problems = []
    means = model.mean_matrix(B)
    n_peaked = 0
    shared = None
    for s, fit in enumerate(model.fits):
        segments, peaks = segments_and_peaks(means[:, s])
        indicator = peak_indicator(means[:, s])
        if (segments - 1) % 2 or peaks not in (0, 1):
            problems.append(f"sample {s}: {segments} segments")
        if not np.isin(indicator, (0, 1)).all():
            problems.append(f"sample {s}: peak indicator outside {{0, 1}}")
        if bool(peaks) != fit.has_peak:
            problems.append(f"sample {s}: has_peak={fit.has_peak} but {peaks} peaks")
        if fit.has_peak and not (fit.mean_peak > fit.mean_left and fit.mean_peak > fit.mean_right):
            problems.append(f"sample {s}: peak mean not above both backgrounds")
        if peaks == 1:
            n_peaked += 1
            if shared is None:
                shared = indicator
            elif not np.array_equal(shared, indicator):
                problems.append(f"sample {s}: peak position differs from other samples")
    if n_peaked != model.p:
        problems.append(f"{n_peaked} peaked samples but p={model.p}")
    if (model.peak is None) != (model.p == 0):
        problems.append("peak interval must be present iff p > 0")
    if model.peak is not None and not 1 <= model.peak.first_change < model.peak.last_change <= B - 1:
        problems.append(f"peak {model.peak} not interior to [0, {B})")
    if not math.isclose(model.total_loss, sum(f.loss for f in model.fits), rel_tol=1e-12,
                        abs_tol=1e-9):
        problems.append("total loss differs from the sum of sample losses")
    return problems
