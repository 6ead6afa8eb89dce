"""Coverage ingestion, problem extraction, tiling and binning.

All coordinates are 0-based half-open, as in bedGraph/BED files.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

MIN_PROBLEM_SIZE = 4


class ParseError(ValueError):
    """Malformed or inconsistent input file."""


class InvalidProblemError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageRun:
    start: int
    end: int
    count: int
    chrom: str = ""

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty run [{self.start}, {self.end})")
        if self.count < 0:
            raise ValueError(f"negative count {self.count}")


@dataclass(frozen=True)
class CoverageProfile:
    """Run-length encoded coverage of one sample. Gaps between runs count 0."""

    sample_id: str
    runs: tuple[CoverageRun, ...] = ()
    cell_type: str = ""

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(sorted(self.runs, key=lambda r: (r.chrom, r.start))))
        _check_disjoint(self.runs)

    def chroms(self) -> list[str]:
        return sorted({r.chrom for r in self.runs})

    def span(self, chrom: str) -> tuple[int, int] | None:
        runs = [r for r in self.runs if r.chrom == chrom]
        if not runs:
            return None
        return runs[0].start, runs[-1].end


def _check_disjoint(runs: Sequence[CoverageRun], lines: Sequence[int] | None = None):
    for i in range(1, len(runs)):
        prev, cur = runs[i - 1], runs[i]
        if prev.chrom == cur.chrom and cur.start < prev.end:
            where = f" (line {lines[i]})" if lines is not None else ""
            raise ParseError(
                f"overlapping runs on {cur.chrom or '?'}: "
                f"[{prev.start}, {prev.end}) and [{cur.start}, {cur.end}){where}"
            )


def parse_bedgraph(stream: TextIO | Iterable[str]) -> list[CoverageRun]:
    """Parse ``chrom start end count`` records.

    Header lines (``track``, ``browser``, ``#``) and blank lines are skipped.
    Zero-count runs are kept. The result is sorted by chromosome then start.

    Raises:
        ParseError: on a malformed line (with its 1-based line number) or
            on overlapping runs.
    """
    records = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith(("#", "track", "browser")):
            continue
        fields = line.split("\t")
        if len(fields) < 4:
            raise ParseError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
        chrom = fields[0]
        try:
            start, end, count = int(fields[1]), int(fields[2]), int(fields[3])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer start/end/count in {line!r}") from None
        if start < 0 or start >= end:
            raise ParseError(f"line {lineno}: need 0 <= start < end, got [{start}, {end})")
        if count < 0:
            raise ParseError(f"line {lineno}: negative count {count}")
        records.append((chrom, start, lineno, CoverageRun(start, end, count, chrom)))
    records.sort(key=lambda r: (r[0], r[1]))
    runs = [r[3] for r in records]
    _check_disjoint(runs, [r[2] for r in records])
    return runs


def read_bedgraph(path, sample_id: str, cell_type: str = "") -> CoverageProfile:
    with open(path) as fh:
        try:
            runs = parse_bedgraph(fh)
        except ParseError as err:
            raise ParseError(f"{path}: {err}") from None
    return CoverageProfile(sample_id, tuple(runs), cell_type)


def read_manifest(path) -> list[tuple[str, str, str]]:
    """Read a ``sampleId path cellType`` manifest; relative paths resolve
    against the manifest's directory."""
    import os

    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ParseError(f"{path}: line {lineno}: expected 'sampleId<TAB>path[<TAB>cellType]'")
            sample_id, sample_path = fields[0], fields[1]
            cell_type = fields[2] if len(fields) > 2 else ""
            if not os.path.isabs(sample_path):
                sample_path = os.path.join(base, sample_path)
            entries.append((sample_id, sample_path, cell_type))
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate sample ids")
    return entries


def load_manifest(path) -> list[CoverageProfile]:
    return [read_bedgraph(p, sid, ct) for sid, p, ct in read_manifest(path)]


@dataclass(frozen=True, eq=False)
class ProblemMatrix:
    """Dense ``B x S`` count matrix for one segmentation problem."""

    counts: np.ndarray
    window_start: int = 0
    sample_ids: tuple[str, ...] = ()
    chrom: str = ""

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim == 1:
            counts = counts[:, None]
        if counts.ndim != 2:
            raise InvalidProblemError(f"counts must be 2-D (B x S), got shape {counts.shape}")
        if counts.shape[0] < MIN_PROBLEM_SIZE:
            raise InvalidProblemError(
                f"problem needs at least {MIN_PROBLEM_SIZE} bases, got {counts.shape[0]}")
        if counts.shape[1] < 1:
            raise InvalidProblemError("problem needs at least one sample")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise InvalidProblemError("counts must be finite and non-negative")
        if not np.issubdtype(counts.dtype, np.integer):
            if np.any(counts != np.round(counts)):
                raise InvalidProblemError("counts must be integers")
        counts = counts.astype(np.int64, copy=False)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        ids = tuple(self.sample_ids) or tuple(f"sample{s + 1}" for s in range(counts.shape[1]))
        if len(ids) != counts.shape[1]:
            raise InvalidProblemError(f"{len(ids)} sample ids for {counts.shape[1]} samples")
        object.__setattr__(self, "sample_ids", ids)

    @property
    def B(self) -> int:
        return self.counts.shape[0]

    @property
    def S(self) -> int:
        return self.counts.shape[1]

    @property
    def window_end(self) -> int:
        return self.window_start + self.B

    @functools.cached_property
    def cumsum(self) -> np.ndarray:
        """``(B + 1) x S`` prefix sums, row 0 all zeros."""
        cs = np.zeros((self.B + 1, self.S), dtype=np.float64)
        np.cumsum(self.counts, axis=0, out=cs[1:])
        cs.setflags(write=False)
        return cs


def extract_problem(profiles: Sequence[CoverageProfile], window_start: int, B: int,
                    chrom: str | None = None) -> ProblemMatrix:
    """Materialize ``[window_start, window_start + B)`` of each profile.

    Bases not covered by any run are 0. When ``chrom`` is given only runs on
    that chromosome are used.
    """
    if B < MIN_PROBLEM_SIZE:
        raise InvalidProblemError(f"problem size B={B} < {MIN_PROBLEM_SIZE}")
    if not profiles:
        raise InvalidProblemError("no sample profiles")
    window_end = window_start + B
    counts = np.zeros((B, len(profiles)), dtype=np.int64)
    for s, prof in enumerate(profiles):
        for run in prof.runs:
            if chrom is not None and run.chrom != chrom:
                continue
            lo, hi = max(run.start, window_start), min(run.end, window_end)
            if lo < hi:
                counts[lo - window_start:hi - window_start, s] = run.count
    return ProblemMatrix(counts, window_start, tuple(p.sample_id for p in profiles), chrom or "")


def tile_window(window_start: int, window_end: int, B: int,
                overlap_fraction: float = 0.0) -> list[tuple[int, int]]:
    """Cover a window with tiles of width ``B``.

    Tiles advance by ``B * (1 - overlap_fraction)`` bases; the last tile is
    shifted left so that it ends exactly at ``window_end``. A window shorter
    than ``B`` yields one tile spanning it.
    """
    if not 0 <= overlap_fraction < 1:
        raise ValueError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    if B < 1:
        raise ValueError(f"tile width must be positive, got {B}")
    if window_end <= window_start:
        raise ValueError(f"empty window [{window_start}, {window_end})")
    if window_end - window_start <= B:
        return [(window_start, window_end)]
    stride = max(1, int(round(B * (1 - overlap_fraction))))
    tiles = []
    start = window_start
    while start + B < window_end:
        tiles.append((start, start + B))
        start += stride
    tiles.append((window_end - B, window_end))
    return tiles


@dataclass(frozen=True, eq=False)
class BinnedProblem:
    """Bin sums of a problem. ``bin_totals`` is ``b x S``.

    There are ``floor(B / bin_size) + 1`` bins; all but the last are full and
    the last holds the remainder, which may be empty (width 0).
    """

    bin_size: int
    bin_totals: np.ndarray
    bin_widths: np.ndarray
    B: int = field(default=0)

    @property
    def b(self) -> int:
        return len(self.bin_widths)

    @property
    def S(self) -> int:
        return self.bin_totals.shape[1]

    @property
    def bin_starts(self) -> np.ndarray:
        return np.arange(self.b, dtype=np.int64) * self.bin_size


def n_bins(B: int, bin_size: int) -> int:
    return B // bin_size + 1


def bin_problem(problem: ProblemMatrix, bin_size: int) -> BinnedProblem:
    if bin_size < 1:
        raise ValueError(f"bin_size must be >= 1, got {bin_size}")
    B, S = problem.B, problem.S
    b = n_bins(B, bin_size)
    full = (b - 1) * bin_size
    totals = np.empty((b, S), dtype=np.int64)
    totals[:-1] = problem.counts[:full].reshape(b - 1, bin_size, S).sum(axis=1)
    totals[-1] = problem.counts[full:].sum(axis=0)
    widths = np.full(b, bin_size, dtype=np.int64)
    widths[-1] = B - full
    return BinnedProblem(bin_size, totals, widths, B)
