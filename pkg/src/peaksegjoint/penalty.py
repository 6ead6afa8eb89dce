"""Model selection and supervised penalty learning.

The number of peaks for a penalty ``lam`` is ``argmin_p p * lam + loss_p``.
A linear function of per-sample features predicts ``log(lam)``; its weights
are learned from target intervals with a squared hinge loss and an L1
penalty, solved by FISTA.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .genomic import ProblemMatrix

FEATURE_NAMES = ("intercept", "log1p_total", "log1p_max", "log_bases", "log1p_q75")


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SelectionFunction:
    """Piecewise-constant optimal model size over penalties.

    ``intervals`` holds ``(low, high, p)`` triples in increasing penalty
    order; ``p`` is selected for ``low <= lam < high`` (the first interval
    starts open at 0).
    """

    intervals: tuple[tuple[float, float, int], ...]

    def select(self, lam: float) -> int:
        if not lam > 0:
            raise ValueError(f"penalty must be positive, got {lam}")
        for low, high, p in self.intervals:
            if lam < high:
                return p
        return self.intervals[-1][2]

    def select_log(self, log_lam: float) -> int:
        for _, high, p in self.intervals:
            if log_lam < _log(high):
                return p
        return self.intervals[-1][2]

    @property
    def model_sizes(self) -> list[int]:
        return [p for _, _, p in self.intervals]


def selection_breakpoints(losses: Sequence[Optional[float]]) -> SelectionFunction:
    """Exact ``p*(lam)`` for all penalties from the lower convex hull of the losses.

    Absent models (``None``) are skipped. At a breakpoint the smaller model wins.
    """
    present = {p: float(loss) for p, loss in enumerate(losses)
               if loss is not None and math.isfinite(loss)}
    if 0 not in present:
        raise ValueError("the flat model (p=0) must be present")
    min_loss = min(present.values())
    cur = min(p for p, loss in present.items() if loss == min_loss)
    cur_lam = 0.0
    intervals = []
    while True:
        steps = [((present[q] - present[cur]) / (cur - q), q) for q in present if q < cur]
        if not steps:
            intervals.append((cur_lam, math.inf, cur))
            break
        next_lam, nxt = min(steps)
        if next_lam > cur_lam:
            intervals.append((cur_lam, next_lam, cur))
            cur_lam = next_lam
        cur = nxt
    return SelectionFunction(tuple(intervals))


@dataclass(frozen=True)
class TargetInterval:
    """Range ``(lower, upper)`` of log-penalties selecting a min-error model."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty target interval ({self.lower}, {self.upper})")

    def contains(self, log_lam: float) -> bool:
        return self.lower < log_lam < self.upper

    @property
    def is_trivial(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)


def _log(x: float) -> float:
    return -math.inf if x == 0 else math.log(x)


def compute_target_interval(selection: SelectionFunction,
                            errors_by_p: Sequence[float]) -> TargetInterval:
    """Widest contiguous run of minimum label error, in log-penalty units.

    Between equally wide runs the one at larger penalties (fewer peaks) wins.
    """
    errs = [errors_by_p[p] for _, _, p in selection.intervals]
    best_err = min(errs)
    runs = []
    i = 0
    while i < len(errs):
        if errs[i] != best_err:
            i += 1
            continue
        j = i
        while j + 1 < len(errs) and errs[j + 1] == best_err:
            j += 1
        runs.append((_log(selection.intervals[i][0]), _log(selection.intervals[j][1])))
        i = j + 1
    best = None
    for lo, hi in runs:
        if best is None or hi - lo >= best[1] - best[0]:
            best = (lo, hi)
    return TargetInterval(*best)


def extract_features(problem: ProblemMatrix) -> np.ndarray:
    """Default ``d x S`` features, one column per sample (see ``FEATURE_NAMES``)."""
    z = problem.counts.astype(np.float64)
    return np.vstack([
        np.ones(problem.S),
        np.log1p(z.sum(axis=0)),
        np.log1p(z.max(axis=0)),
        np.full(problem.S, math.log(problem.B)),
        np.log1p(np.quantile(z, 0.75, axis=0)),
    ])


def squared_hinge(x):
    """``(x - 1)**2`` for ``x <= 1``, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 1, np.square(x - 1), 0.0)
    return float(out) if out.ndim == 0 else out


def _hinge_grad(x):
    return np.where(x <= 1, 2.0 * (x - 1), 0.0)


def surrogate_loss(interval: TargetInterval, log_lambda: float) -> float:
    with np.errstate(invalid="ignore"):
        return float(squared_hinge(log_lambda - interval.lower)
                     + squared_hinge(interval.upper - log_lambda))


def _surrogate_terms(pred, lower, upper):
    # Infinite limits give +inf margins, i.e. zero loss and gradient.
    with np.errstate(invalid="ignore"):
        lo_margin = pred - lower
        hi_margin = upper - pred
    loss = squared_hinge(lo_margin) + squared_hinge(hi_margin)
    grad = _hinge_grad(lo_margin) - _hinge_grad(hi_margin)
    return loss, grad


def pooled_features(features: Sequence[np.ndarray]) -> np.ndarray:
    """Stack ``X_i @ 1_S`` for each problem into an ``n x d`` matrix."""
    return np.vstack([np.asarray(X, dtype=float).sum(axis=1) for X in features])


def average_surrogate(w, pooled, lower, upper):
    """Average surrogate loss and its gradient with respect to ``w``."""
    loss, dpred = _surrogate_terms(pooled @ w, lower, upper)
    n = len(lower)
    return float(loss.sum() / n), pooled.T @ dpred / n


def subdifferential_residual(w, grad, gamma) -> float:
    """Distance of ``-grad`` from ``gamma * d|w|_1``, worst coordinate."""
    zero = w == 0
    r = np.where(zero, np.maximum(np.abs(grad) - gamma, 0.0),
                 np.abs(grad + gamma * np.sign(w)))
    return float(r.max()) if r.size else 0.0


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass
class WeightVector:
    weights: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    gamma: float = 0.0
    meta: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"featureNames": list(self.feature_names),
                "weights": [float(x) for x in self.weights],
                "gamma": self.gamma, "trainingMeta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightVector":
        return cls(np.asarray(d["weights"], dtype=float), tuple(d["featureNames"]),
                   float(d.get("gamma", 0.0)), dict(d.get("trainingMeta", {})))


def lipschitz_constant(features: Sequence[np.ndarray]) -> float:
    return 2.0 * sum(float(np.sum(np.square(X))) for X in features) / len(features)


def train_fista(features: Sequence[np.ndarray], intervals: Sequence[TargetInterval], gamma: float,
                tol: float = 1e-3, max_iter: int = 100_000, w0=None,
                feature_names: Sequence[str] | None = None) -> WeightVector:
    """Minimize average surrogate loss plus ``gamma * |w|_1``.

    Accelerated proximal gradient with backtracking (the step is halved when
    the quadratic upper bound fails) and momentum restart whenever the
    penalized objective would increase, so the objective is monotone. Stops
    once the subdifferential residual is at most ``tol``.

    Args:
        features: one ``d x S_i`` matrix per problem.
        intervals: one target interval per problem.
        gamma: L1 regularization strength.

    Returns:
        Weights with ``meta`` holding ``iterations``, ``residual``,
        ``objective`` and ``converged``.
    """
    n = len(features)
    if n < 1 or len(intervals) != n:
        raise ValueError(f"need matching non-empty features/intervals, got {n}/{len(intervals)}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    lower = np.array([iv.lower for iv in intervals], dtype=float)
    upper = np.array([iv.upper for iv in intervals], dtype=float)
    if not (np.isfinite(lower).any() or np.isfinite(upper).any()):
        raise ValueError("all target intervals are unbounded; nothing to learn")
    pooled = pooled_features(features)
    d = pooled.shape[1]
    if not np.all(np.isfinite(pooled)):
        raise ValueError("features must be finite")

    lip = lipschitz_constant(features) or 1.0
    step = 1.0 / lip
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    y, t = w.copy(), 1.0
    f_w, g_w = average_surrogate(w, pooled, lower, upper)
    obj = f_w + gamma * np.abs(w).sum()
    history = [obj]
    restarted = False
    it = 0
    residual = subdifferential_residual(w, g_w, gamma)
    while residual > tol and it < max_iter:
        it += 1
        f_y, g_y = average_surrogate(y, pooled, lower, upper)
        while True:
            z = soft_threshold(y - step * g_y, step * gamma)
            f_z, g_z = average_surrogate(z, pooled, lower, upper)
            if not math.isfinite(f_z):
                raise NumericalError(f"non-finite loss at iteration {it}")
            diff = z - y
            if f_z <= f_y + g_y @ diff + diff @ diff / (2 * step) + 1e-15 * abs(f_y):
                break
            step /= 2
            if step < 1e-300:
                raise NumericalError(f"step size underflow at iteration {it}")
        obj_z = f_z + gamma * np.abs(z).sum()
        if obj_z <= obj:
            t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
            y = z + ((t - 1) / t_next) * (z - w)
            w, t, obj, g_w = z, t_next, obj_z, g_z
            restarted = False
        elif restarted:
            break  # a plain proximal step from w no longer decreases the objective
        else:
            y, t = w.copy(), 1.0
            restarted = True
        history.append(obj)
        residual = subdifferential_residual(w, g_w, gamma)

    meta = {"iterations": it, "residual": residual, "objective": obj,
            "converged": residual <= tol, "lipschitz": lip, "n": n}
    names = tuple(feature_names) if feature_names is not None else (
        FEATURE_NAMES if d == len(FEATURE_NAMES) else tuple(f"x{j}" for j in range(d)))
    return WeightVector(w, names, float(gamma), meta, history)


def predict_penalty(w, features: np.ndarray) -> float:
    """Predicted ``log(lam) = w @ X @ 1_S``."""
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] != weights.shape[0]:
        raise ValueError(f"{weights.shape[0]} weights for features of shape {X.shape}")
    return float(weights @ X.sum(axis=1))
