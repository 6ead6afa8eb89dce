"""Annotated region labels and the FP/FN annotation error of peak calls."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

from .genomic import ParseError, ProblemMatrix
from .segmentation import ModelSequence, PeakInterval

ANNOTATIONS = ("noPeaks", "peaks", "peakStart", "peakEnd")


@dataclass(frozen=True)
class LabeledRegion:
    sample_id: str
    start: int
    end: int
    annotation: str
    chrom: str = ""

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty region [{self.start}, {self.end})")
        if self.annotation not in ANNOTATIONS:
            raise ValueError(f"unknown annotation {self.annotation!r}")

    @property
    def name(self) -> str:
        return f"{self.chrom}:{self.start}-{self.end}"


@dataclass(frozen=True)
class ErrorCount:
    fp: int = 0
    fn: int = 0
    regions: int = 0

    @property
    def errors(self) -> int:
        return self.fp + self.fn

    def __add__(self, other: "ErrorCount") -> "ErrorCount":
        return ErrorCount(self.fp + other.fp, self.fn + other.fn, self.regions + other.regions)


def _bounds(peak) -> tuple[int, int]:
    if isinstance(peak, PeakInterval):
        return peak.first_change, peak.last_change
    start, end = peak
    return int(start), int(end)


def region_error(region: LabeledRegion, peaks: Iterable) -> tuple[int, int]:
    """``(fp, fn)`` of one labeled region given that sample's peaks.

    Peaks are half-open ``(start, end)`` pairs in the region's coordinates.
    A peak start "falls in" the region when its first base does, and a peak
    end when its last base ``end - 1`` does.
    """
    spans = [_bounds(pk) for pk in peaks]
    rs, re = region.start, region.end
    ann = region.annotation
    if ann == "noPeaks":
        return int(any(s < re and rs < e for s, e in spans)), 0
    if ann == "peaks":
        return 0, int(not any(s < re and rs < e for s, e in spans))
    if ann == "peakStart":
        hits = sum(rs <= s < re for s, _ in spans)
    elif ann == "peakEnd":
        hits = sum(rs < e <= re for _, e in spans)
    else:
        raise ValueError(f"unknown annotation {ann!r}")
    return int(hits >= 2), int(hits == 0)


def total_error(regions: Sequence[LabeledRegion],
                predictions: Mapping[str, Sequence]) -> ErrorCount:
    """Sum of :func:`region_error` over regions.

    Raises:
        KeyError: if a region's sample has no entry in ``predictions``.
    """
    fp = fn = 0
    for region in regions:
        if region.sample_id not in predictions:
            raise KeyError(f"no predictions for sample {region.sample_id!r}")
        rfp, rfn = region_error(region, predictions[region.sample_id])
        fp += rfp
        fn += rfn
    return ErrorCount(fp, fn, len(regions))


def model_predictions(model, problem: ProblemMatrix) -> dict[str, list[tuple[int, int]]]:
    """Per-sample genomic peak lists for one joint model."""
    out = {sid: [] for sid in problem.sample_ids}
    if model is None or model.peak is None:
        return out
    span = (problem.window_start + model.peak.first_change,
            problem.window_start + model.peak.last_change)
    for s in model.samples:
        out[problem.sample_ids[s]].append(span)
    return out


def errors_by_model_size(sequence: ModelSequence, regions: Sequence[LabeledRegion],
                         problem: ProblemMatrix) -> list[float]:
    """Label errors of each model size; absent models score ``inf``."""
    out = []
    for model in sequence.models:
        if model is None:
            out.append(math.inf)
            continue
        out.append(total_error(regions, model_predictions(model, problem)).errors)
    return out


def parse_labels(stream: TextIO | Iterable[str]) -> list[LabeledRegion]:
    """Parse ``chrom start end annotation sampleId`` lines."""
    regions = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 5:
            raise ParseError(f"line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
        try:
            regions.append(LabeledRegion(fields[4], int(fields[1]), int(fields[2]),
                                         fields[3], fields[0]))
        except ValueError as err:
            raise ParseError(f"line {lineno}: {err}") from None
    return regions


def read_labels(path) -> list[LabeledRegion]:
    with open(path) as fh:
        try:
            return parse_labels(fh)
        except ParseError as err:
            raise ParseError(f"{path}: {err}") from None
