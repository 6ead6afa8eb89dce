"""scikit-learn compatible wrappers around the solver and penalty learner."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .genomic import MIN_PROBLEM_SIZE, ProblemMatrix
from .penalty import TargetInterval, predict_penalty, selection_breakpoints, train_fista
from .segmentation import DEFAULT_MIN_BINS, DEFAULT_ZOOM_FACTOR, fit_model_sequence


def check_count_matrix(Z) -> ProblemMatrix:
    """Validate a ``B x S`` count matrix (or pass a ProblemMatrix through)."""
    if isinstance(Z, ProblemMatrix):
        return Z
    Z = np.asarray(Z)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise ValueError(f"expected a 2-D B x S count matrix, got shape {Z.shape}")
    if Z.shape[0] < MIN_PROBLEM_SIZE:
        raise ValueError(f"need at least {MIN_PROBLEM_SIZE} bases, got {Z.shape[0]}")
    return ProblemMatrix(Z)


def check_feature_matrices(X) -> list[np.ndarray]:
    """Coerce ``X`` to a list of finite ``d x S_i`` matrices with a common ``d``."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        mats = [X[i] for i in range(X.shape[0])]
    elif isinstance(X, np.ndarray) and X.ndim == 2:
        mats = [row[:, None] for row in X]  # one pooled column per problem
    else:
        mats = [np.asarray(m, dtype=float) for m in X]
    if not mats:
        raise ValueError("no feature matrices")
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    d = mats[0].shape[0]
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape[0] != d:
            raise ValueError(f"feature matrix {i} has shape {m.shape}, expected ({d}, S)")
        if not np.all(np.isfinite(m)):
            raise ValueError(f"feature matrix {i} has non-finite entries")
    return mats


def check_intervals(y, n: int) -> list[TargetInterval]:
    if len(y) != n:
        raise ValueError(f"{len(y)} target intervals for {n} problems")
    out = []
    for row in y:
        if isinstance(row, TargetInterval):
            out.append(row)
        else:
            lo, hi = row
            out.append(TargetInterval(float(lo), float(hi)))
    return out


class JointSegmenter(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Fit the PeakSegJoint models of one count matrix and select one by penalty.

    ``transform`` returns the mean matrix of the selected model and
    ``predict`` its ``B x S`` boolean peak mask.
    """

    def __init__(self, penalty=1.0, zoom_factor=DEFAULT_ZOOM_FACTOR, min_bins=DEFAULT_MIN_BINS):
        self.penalty = penalty
        self.zoom_factor = zoom_factor
        self.min_bins = min_bins

    def fit(self, Z, y=None):
        if not self.penalty > 0:
            raise ValueError(f"penalty must be positive, got {self.penalty}")
        problem = check_count_matrix(Z)
        self.problem_ = problem
        self.models_ = fit_model_sequence(problem, self.zoom_factor, self.min_bins)
        self.losses_ = self.models_.losses
        self.selection_ = selection_breakpoints(self.losses_)
        self.n_peaks_ = self.selection_.select(self.penalty)
        self.model_ = self.models_[self.n_peaks_]
        return self

    def transform(self, Z=None):
        check_is_fitted(self, "model_")
        if Z is not None:
            self.fit(Z)
        return self.model_.mean_matrix(self.problem_.B)

    def predict(self, Z=None):
        check_is_fitted(self, "model_")
        if Z is not None:
            self.fit(Z)
        mask = np.zeros((self.problem_.B, self.problem_.S), dtype=bool)
        if self.model_.peak is not None:
            pk = self.model_.peak
            mask[pk.first_change:pk.last_change, list(self.model_.samples)] = True
        return mask


class PenaltyLearner(RegressorMixin, BaseEstimator):
    """L1-regularized squared-hinge interval regression for ``log(penalty)``.

    ``X`` is a sequence of ``d x S`` feature matrices (or an ``n x d x S``
    array); ``y`` holds ``(lower, upper)`` limits, possibly infinite.
    """

    def __init__(self, gamma=0.0, tol=1e-3, max_iter=100_000):
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        mats = check_feature_matrices(X)
        intervals = check_intervals(y, len(mats))
        wv = train_fista(mats, intervals, self.gamma, tol=self.tol, max_iter=self.max_iter)
        self.weights_ = wv
        self.coef_ = wv.weights
        self.n_iter_ = wv.meta["iterations"]
        self.residual_ = wv.meta["residual"]
        self.n_features_in_ = len(wv.weights)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.array([predict_penalty(self.coef_, m) for m in check_feature_matrices(X)])

    def score(self, X, y, sample_weight=None):
        """Fraction of predictions strictly inside their target interval."""
        pred = self.predict(X)
        intervals = check_intervals(y, len(pred))
        inside = np.array([iv.contains(f) for iv, f in zip(intervals, pred)], dtype=float)
        if sample_weight is None:
            return float(inside.mean())
        return float(np.average(inside, weights=sample_weight))
