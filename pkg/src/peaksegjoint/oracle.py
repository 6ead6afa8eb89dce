"""Exact reference solvers for testing the heuristic solver.

These are deliberately slow. They share the candidate scoring with the
solver so that disagreements isolate the search strategy.
"""
from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

from .genomic import ProblemMatrix
from .segmentation import (
    JointModel,
    PeakInterval,
    best_candidate,
    build_model,
    flat_losses,
    flat_model,
    score_candidates,
)

DEFAULT_MAX_BASES = 200


class OracleTooLargeError(ValueError):
    pass


def all_interior_pairs(B: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.array(list(itertools.combinations(range(1, B), 2)), dtype=np.int64).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def brute_force_joint(problem: ProblemMatrix, p: int, max_bases: int = DEFAULT_MAX_BASES,
                      firsts: np.ndarray | None = None,
                      lasts: np.ndarray | None = None) -> JointModel | None:
    """Global optimum over every interior peak at base resolution.

    ``firsts``/``lasts`` restrict the search to given candidate positions.
    """
    if problem.B > max_bases:
        raise OracleTooLargeError(f"oracle refuses B={problem.B} > {max_bases}")
    if not 0 <= p <= problem.S:
        raise ValueError(f"p must be in 0..{problem.S}, got {p}")
    if p == 0:
        return flat_model(problem)
    if firsts is None:
        firsts, lasts = all_interior_pairs(problem.B)
    cumwidth = np.arange(problem.B + 1, dtype=np.float64)
    total, chosen = score_candidates(problem.cumsum, cumwidth, firsts, lasts,
                                     flat_losses(problem), p)
    best = best_candidate(total)
    if best is None:
        return None
    return build_model(problem, PeakInterval(int(firsts[best]), int(lasts[best])),
                       np.flatnonzero(chosen[best]))


def _direct_loss(means: np.ndarray, counts: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = means - np.where(counts > 0, counts * np.log(means), 0.0)
    return float(terms.sum())


def naive_joint_loss(counts: np.ndarray, p: int) -> Optional[float]:
    """Minimum loss by explicit loops over peaks and sample subsets.

    Independent of all solver code: builds each candidate mean vector and
    checks feasibility from the per-base definition. Tiny inputs only.
    """
    counts = np.asarray(counts, dtype=float)
    B, S = counts.shape
    flat = [_direct_loss(np.full(B, counts[:, s].mean()), counts[:, s]) for s in range(S)]
    if p == 0:
        return sum(flat)
    best = None
    for f in range(1, B):
        for l in range(f + 1, B):
            peaked_losses = {}
            for s in range(S):
                z = counts[:, s]
                ml, mp, mr = z[:f].mean(), z[f:l].mean(), z[l:].mean()
                if mp > ml and mp > mr:
                    m = np.concatenate([np.full(f, ml), np.full(l - f, mp), np.full(B - l, mr)])
                    peaked_losses[s] = _direct_loss(m, z)
            for subset in itertools.combinations(sorted(peaked_losses), p):
                loss = sum(peaked_losses[s] if s in subset else flat[s] for s in range(S))
                if best is None or loss < best:
                    best = loss
    return best


def three_segment_dp(counts: Sequence[int], chunk: int = 256) -> tuple[float, int, int]:
    """Exact up-down 3-segment Poisson segmentation of one sample.

    For every peak end ``l`` the best start is found over all ``f < l``; cost
    is quadratic in the number of bases. Rows are processed in chunks.

    Returns:
        ``(loss, first_change, last_change)``; ``(inf, -1, -1)`` when no
        up-down segmentation exists.
    """
    z = np.asarray(counts, dtype=np.float64)
    B = z.size
    cs = np.concatenate([[0.0], np.cumsum(z)])
    total = cs[-1]
    idx = np.arange(B + 1, dtype=np.float64)
    best = (np.inf, -1, -1)

    def seg_loss(t, w):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = t - t * np.log(t / w)
        return np.where(t > 0, out, 0.0)

    # First segment [0, f) has a single possible cost per f.
    first_cost = seg_loss(cs[:B], idx[:B])
    firsts = np.arange(1, B - 1)
    for lo in range(2, B, chunk):
        lasts = np.arange(lo, min(lo + chunk, B))
        ff, ll = np.meshgrid(firsts, lasts, indexing="ij")
        valid = ff < ll
        t_left, w_left = cs[ff], idx[ff]
        t_peak, w_peak = cs[ll] - cs[ff], ll - ff
        t_right, w_right = total - cs[ll], B - ll
        with np.errstate(divide="ignore", invalid="ignore"):
            up = t_peak / w_peak > t_left / w_left
            down = t_peak / w_peak > t_right / w_right
        cost = first_cost[ff] + seg_loss(t_peak, w_peak) + seg_loss(t_right, w_right)
        cost = np.where(valid & up & down, cost, np.inf)
        fi, li = np.unravel_index(int(np.argmin(cost)), cost.shape)
        c = cost[fi, li]
        if c < best[0]:
            best = (float(c), int(firsts[fi]), int(lasts[li]))
    return best


def brute_force_model_selection(losses: Sequence[Optional[float]],
                                lambdas: Sequence[float]) -> dict[float, int]:
    """``argmin_p p * lambda + loss_p`` for each penalty; ties go to smaller p."""
    present = [(p, loss) for p, loss in enumerate(losses) if loss is not None]
    out = {}
    for lam in lambdas:
        best_p, best_cost = None, np.inf
        for p, loss in present:
            cost = p * lam + loss
            if cost < best_cost:
                best_p, best_cost = p, cost
        out[lam] = best_p
    return out
