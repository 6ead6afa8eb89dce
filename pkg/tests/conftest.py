import numpy as np
import pytest

from peaksegjoint.simulate import random_planted_problem

CORPUS_SEED = 2024
CORPUS_SIZE = 500

_acceptance = {}


@pytest.fixture(scope="session")
def planted_corpus():
    """Random problems with B <= 100, S <= 4 and one planted joint peak."""
    rng = np.random.default_rng(CORPUS_SEED)
    return [random_planted_problem(rng, max_bases=100, max_samples=4) for _ in range(CORPUS_SIZE)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_bedgraph(path, chrom, counts, start=0):
    """Run-length encode per-base ``counts`` into a bedGraph file."""
    counts = np.asarray(counts)
    cuts = np.flatnonzero(np.diff(counts)) + 1
    bounds = np.concatenate([[0], cuts, [counts.size]])
    with open(path, "w") as fh:
        for a, b in zip(bounds[:-1], bounds[1:]):
            fh.write(f"{chrom}\t{start + a}\t{start + b}\t{counts[a]}\n")


PLANTED_TILE = 1000
PLANTED_TILES = 6


@pytest.fixture
def planted_dataset(tmp_path):
    """Three samples on chr1; samples a and b share a peak in every even tile.

    Returns a dict with the manifest, labels, the planted peaks and the
    peaked sample ids.
    """
    rng = np.random.default_rng(99)
    ids = ("a", "b", "c")
    B = PLANTED_TILE * PLANTED_TILES
    rates = np.full((B, 3), 1.0)
    peaks = []
    for t in range(0, PLANTED_TILES, 2):
        start = t * PLANTED_TILE + 400
        rates[start:start + 200, :2] = 20.0
        peaks.append((start, start + 200))
    counts = rng.poisson(rates)
    lines = []
    for s, sid in enumerate(ids):
        write_bedgraph(tmp_path / f"{sid}.bedGraph", "chr1", counts[:, s])
        lines.append(f"{sid}\t{sid}.bedGraph")
    (tmp_path / "manifest.tsv").write_text("\n".join(lines) + "\n")
    labels = []
    for t in range(PLANTED_TILES):
        off = t * PLANTED_TILE
        if t % 2 == 0:
            labels += [f"chr1\t{off + 450}\t{off + 550}\tpeaks\t{sid}" for sid in ("a", "b")]
            labels += [f"chr1\t{off + 50}\t{off + 300}\tnoPeaks\tc",
                       f"chr1\t{off + 300}\t{off + 700}\tnoPeaks\tc",
                       f"chr1\t{off + 700}\t{off + 950}\tnoPeaks\ta"]
        else:
            labels += [f"chr1\t{off + 100}\t{off + 900}\tnoPeaks\t{sid}" for sid in ids]
    (tmp_path / "labels.tsv").write_text("\n".join(labels) + "\n")
    return {"dir": tmp_path, "manifest": tmp_path / "manifest.tsv",
            "labels": tmp_path / "labels.tsv", "peaks": peaks, "peaked": ("a", "b"),
            "n_labels": len(labels)}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}")
