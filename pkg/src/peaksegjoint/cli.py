"""Command-line interface: segment, learn, predict, evaluate, bench."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .bench import DEFAULT_SIZES, run_bench
from .genomic import (
    MIN_PROBLEM_SIZE,
    CoverageProfile,
    ParseError,
    ProblemMatrix,
    extract_problem,
    load_manifest,
    tile_window,
)
from .labels import (
    LabeledRegion,
    errors_by_model_size,
    read_labels,
    region_error,
)
from .penalty import (
    FEATURE_NAMES,
    WeightVector,
    compute_target_interval,
    extract_features,
    predict_penalty,
    selection_breakpoints,
    train_fista,
)
from .segmentation import ModelSequence, check_constraints, fit_model_sequence

log = logging.getLogger("peaksegjoint")

DEFAULT_PROBLEM_SIZE = 10_000
DEFAULT_GAMMA_GRID = tuple(2.0 ** k for k in range(-10, 1))


class CLIError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem_size: int = DEFAULT_PROBLEM_SIZE
    zoom_factor: int = 2
    overlap: float = 0.0
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.problem_size < MIN_PROBLEM_SIZE:
            raise CLIError(f"--problem-size must be >= {MIN_PROBLEM_SIZE}")
        if self.zoom_factor < 2:
            raise CLIError("--zoom-factor must be >= 2")
        if not 0 <= self.overlap < 1:
            raise CLIError("--overlap must be in [0, 1)")
        if any(g < 0 for g in self.gamma_grid) or not self.gamma_grid:
            raise CLIError("--gamma-grid needs non-negative values")


@dataclass(frozen=True)
class Tile:
    chrom: str
    start: int
    end: int


def parse_window(text: str) -> tuple[str, int, int]:
    m = re.fullmatch(r"([^:]+):(\d+)-(\d+)", text.replace(",", ""))
    if not m:
        raise CLIError(f"window must look like chrom:start-end, got {text!r}")
    chrom, start, end = m.group(1), int(m.group(2)), int(m.group(3))
    if start >= end:
        raise CLIError(f"empty window {text!r}")
    return chrom, start, end


def data_windows(profiles: list[CoverageProfile]) -> list[tuple[str, int, int]]:
    """One window per chromosome spanning all samples' runs."""
    spans: dict[str, list[int]] = {}
    for prof in profiles:
        for chrom in prof.chroms():
            lo, hi = prof.span(chrom)
            cur = spans.setdefault(chrom, [lo, hi])
            cur[0], cur[1] = min(cur[0], lo), max(cur[1], hi)
    return [(c, lo, hi) for c, (lo, hi) in sorted(spans.items())]


def make_tiles(windows, cfg: RunConfig) -> list[Tile]:
    tiles = []
    for chrom, start, end in windows:
        for lo, hi in tile_window(start, end, cfg.problem_size, cfg.overlap):
            if hi - lo < MIN_PROBLEM_SIZE:
                log.warning("skipping %s:%d-%d shorter than %d bases", chrom, lo, hi,
                            MIN_PROBLEM_SIZE)
                continue
            tiles.append(Tile(chrom, lo, hi))
    return tiles


def tile_problem(profiles, tile: Tile) -> ProblemMatrix:
    return extract_problem(profiles, tile.start, tile.end - tile.start, tile.chrom)


def parallel_map(fn, items, threads: int):
    # Results come back in input order whatever the completion order.
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@contextmanager
def open_out(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _windows(args, profiles):
    if args.window:
        return [parse_window(w) for w in args.window]
    return data_windows(profiles)


def _fit_tile(profiles, tile: Tile, cfg: RunConfig):
    problem = tile_problem(profiles, tile)
    return problem, fit_model_sequence(problem, cfg.zoom_factor)


def cmd_segment(args, cfg: RunConfig):
    profiles = load_manifest(args.manifest)
    tiles = make_tiles(_windows(args, profiles), cfg)

    def work(tile):
        problem, seq = _fit_tile(profiles, tile, cfg)
        return json.dumps(seq.to_dict(problem))

    with open_out(args.out) as fh:
        for line in parallel_map(work, tiles, cfg.threads):
            fh.write(line + "\n")


@dataclass
class LabeledTile:
    tile: Tile
    problem: ProblemMatrix
    sequence: ModelSequence
    regions: list[LabeledRegion]
    features: np.ndarray
    errors: list[float]

    @property
    def selection(self):
        return selection_breakpoints(self.sequence.losses)

    def error_at(self, log_lambda: float) -> float:
        return self.errors[self.selection.select_log(log_lambda)]


def assign_regions(regions: list[LabeledRegion], tiles: list[Tile]) -> dict[int, list]:
    """Give each region to the first tile containing its midpoint."""
    out: dict[int, list] = {}
    for region in regions:
        mid = (region.start + region.end) // 2
        for i, tile in enumerate(tiles):
            if tile.chrom == region.chrom and tile.start <= mid < tile.end:
                out.setdefault(i, []).append(region)
                break
        else:
            log.warning("label %s (%s) lies outside every tile", region.name, region.sample_id)
    return out


def validation_error(tiles: list[LabeledTile], weights) -> float:
    return sum(t.error_at(predict_penalty(weights, t.features)) for t in tiles)


def _train(tiles: list[LabeledTile], gamma: float) -> WeightVector:
    intervals = [compute_target_interval(t.selection, t.errors) for t in tiles]
    if all(iv.is_trivial for iv in intervals):
        return WeightVector(np.zeros(len(FEATURE_NAMES)), FEATURE_NAMES, gamma,
                            {"iterations": 0, "residual": 0.0, "converged": True, "n": len(tiles)})
    return train_fista([t.features for t in tiles], intervals, gamma)


def cmd_learn(args, cfg: RunConfig):
    profiles = load_manifest(args.manifest)
    regions = read_labels(args.labels)
    if not regions:
        raise CLIError("no labels")
    known = {p.sample_id for p in profiles}
    missing = sorted({r.sample_id for r in regions} - known)
    if missing:
        raise CLIError(f"labeled samples missing from manifest: {', '.join(missing)}")
    tiles = make_tiles(_windows(args, profiles), cfg)
    by_tile = assign_regions(regions, tiles)

    def work(i):
        problem, seq = _fit_tile(profiles, tiles[i], cfg)
        errs = errors_by_model_size(seq, by_tile[i], problem)
        return LabeledTile(tiles[i], problem, seq, by_tile[i], extract_features(problem), errs)

    labeled = parallel_map(work, sorted(by_tile), cfg.threads)
    if not labeled:
        raise CLIError("no tile contains a labeled region")
    intervals = [compute_target_interval(t.selection, t.errors) for t in labeled]
    if all(iv.is_trivial for iv in intervals):
        raise CLIError("every target interval is unbounded; labels carry no information")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(labeled))
    if len(labeled) >= 2:
        half = len(labeled) // 2
        train = [labeled[i] for i in sorted(order[:half])]
        valid = [labeled[i] for i in sorted(order[half:])]
    else:
        train = valid = labeled
    val_errors = []
    for gamma in cfg.gamma_grid:
        val_errors.append(validation_error(valid, _train(train, gamma)))
    best_err = min(val_errors)
    # Ties go to the strongest regularization.
    chosen = max(g for g, e in zip(cfg.gamma_grid, val_errors) if e == best_err)
    weights = _train(labeled, chosen)
    weights.meta.update({
        "gammaGrid": list(cfg.gamma_grid),
        "validationErrors": val_errors,
        "trainingErrors": validation_error(labeled, weights),
        "labeledTiles": len(labeled),
        "problemSize": cfg.problem_size,
        "zoomFactor": cfg.zoom_factor,
        "seed": cfg.seed,
    })
    with open_out(args.out) as fh:
        json.dump(weights.to_dict(), fh, indent=2)
        fh.write("\n")


def predict_tile(problem: ProblemMatrix, seq: ModelSequence, weights: WeightVector):
    log_lambda = predict_penalty(weights, extract_features(problem))
    p_hat = selection_breakpoints(seq.losses).select_log(log_lambda)
    model = seq[p_hat]
    violations = check_constraints(model, problem.B)
    if violations:
        raise RuntimeError(f"invalid model on {problem.chrom}:{problem.window_start}: {violations}")
    return log_lambda, model


def cmd_predict(args, cfg: RunConfig):
    profiles = load_manifest(args.manifest)
    with open(args.weights) as fh:
        weights = WeightVector.from_dict(json.load(fh))
    if len(weights.weights) != len(FEATURE_NAMES):
        raise CLIError(f"weights have {len(weights.weights)} entries, features have "
                       f"{len(FEATURE_NAMES)}")
    tiles = make_tiles(_windows(args, profiles), cfg)

    def work(tile):
        problem, seq = _fit_tile(profiles, tile, cfg)
        _, model = predict_tile(problem, seq, weights)
        if model.peak is None:
            return None
        ids = ",".join(problem.sample_ids[s] for s in model.samples)
        return (f"{tile.chrom}\t{problem.window_start + model.peak.first_change}\t"
                f"{problem.window_start + model.peak.last_change}\t{ids}")

    with open_out(args.out) as fh:
        for line in parallel_map(work, tiles, cfg.threads):
            if line is not None:
                fh.write(line + "\n")


def read_peaks_bed(path) -> dict[tuple[str, str], list[tuple[int, int]]]:
    """``(chrom, sampleId) -> sorted peaks`` from ``chrom start end sampleList`` lines."""
    peaks: dict[tuple[str, str], list] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith(("#", "track", "browser")):
                continue
            fields = line.split("\t")
            if len(fields) < 4:
                raise ParseError(f"{path}: line {lineno}: expected chrom start end sampleList")
            try:
                start, end = int(fields[1]), int(fields[2])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-integer coordinates") from None
            if start >= end:
                raise ParseError(f"{path}: line {lineno}: empty peak [{start}, {end})")
            for sid in fields[3].split(","):
                peaks.setdefault((fields[0], sid), []).append((start, end))
    return {k: sorted(v) for k, v in peaks.items()}


def cmd_evaluate(args, cfg: RunConfig):
    peaks = read_peaks_bed(args.predictions)
    regions = read_labels(args.labels)
    fp_total = fn_total = 0
    with open_out(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sampleId", "region", "annotation", "fp", "fn"])
        for region in regions:
            fp, fn = region_error(region, peaks.get((region.chrom, region.sample_id), []))
            fp_total += fp
            fn_total += fn
            writer.writerow([region.sample_id, region.name, region.annotation, fp, fn])
        writer.writerow(["ALL", f"{len(regions)} regions", "ALL", fp_total, fn_total])
    log.info("%d regions: %d FP, %d FN", len(regions), fp_total, fn_total)


def cmd_bench(args, cfg: RunConfig):
    rows = run_bench(args.sizes, cfg.zoom_factor, args.repetitions, cfg.seed, args.dp_max_size)
    with open_out(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["B", "seconds", "algorithm"])
        for B, seconds, algo in rows:
            writer.writerow([B, f"{seconds:.6g}", algo])


def _float_list(text: str) -> tuple[float, ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if item.startswith("2^"):
            out.append(2.0 ** float(item[2:]))
        else:
            out.append(float(item))
    return tuple(out)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(float(x)) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem-size", type=int, default=DEFAULT_PROBLEM_SIZE,
                        help="bases per segmentation problem (default %(default)s)")
    common.add_argument("--zoom-factor", type=int, default=2)
    common.add_argument("--overlap", type=float, default=0.0,
                        help="fraction of overlap between consecutive tiles")
    common.add_argument("--gamma-grid", type=_float_list, default=DEFAULT_GAMMA_GRID,
                        help="comma-separated L1 strengths, e.g. 2^-6,2^-3,1")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="peaksegjoint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_data(p):
        p.add_argument("--manifest", required=True,
                       help="tab-separated sampleId, bedGraph path, cellType")
        p.add_argument("--window", action="append",
                       help="chrom:start-end to analyze (repeatable; default: data span)")
        return p

    with_data(sub.add_parser("segment", parents=[common], help="fit model sequences per tile"))
    learn = with_data(sub.add_parser("learn", parents=[common], help="train penalty weights"))
    learn.add_argument("--labels", required=True)
    pred = with_data(sub.add_parser("predict", parents=[common], help="call joint peaks"))
    pred.add_argument("--weights", required=True)
    ev = sub.add_parser("evaluate", parents=[common], help="FP/FN of predictions vs labels")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--labels", required=True)
    bench = sub.add_parser("bench", parents=[common], help="timing on simulated data")
    bench.add_argument("--sizes", type=_int_list, default=DEFAULT_SIZES)
    bench.add_argument("--repetitions", type=int, default=3)
    bench.add_argument("--dp-max-size", type=int, default=10_000)
    return parser


COMMANDS = {"segment": cmd_segment, "learn": cmd_learn, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = RunConfig(args.problem_size, args.zoom_factor, args.overlap, args.gamma_grid,
                        args.seed, args.threads)
        COMMANDS[args.command](args, cfg)
    except (CLIError, ParseError, OSError, ValueError, KeyError) as err:
        print(f"peaksegjoint {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
