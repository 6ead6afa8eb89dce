import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peaksegjoint.genomic import ProblemMatrix
from peaksegjoint.oracle import brute_force_model_selection
from peaksegjoint.penalty import (
    NumericalError,
    TargetInterval,
    WeightVector,
    average_surrogate,
    compute_target_interval,
    extract_features,
    pooled_features,
    predict_penalty,
    selection_breakpoints,
    squared_hinge,
    surrogate_loss,
    train_fista,
)

INF = math.inf


def test_breakpoints_three_models():
    sel = selection_breakpoints([10, 6, 5])
    assert sel.intervals == ((0.0, 1.0, 2), (1.0, 4.0, 1), (4.0, INF, 0))
    grid = np.geomspace(0.01, 100, 400)
    brute = brute_force_model_selection([10, 6, 5], grid)
    assert all(sel.select(lam) == brute[lam] for lam in grid)


def test_breakpoints_single_model():
    assert selection_breakpoints([10]).intervals == ((0.0, INF, 0),)


def test_breakpoints_skip_model_above_hull():
    sel = selection_breakpoints([10, 9, 1])
    assert sel.intervals == ((0.0, 4.5, 2), (4.5, INF, 0))
    assert 1 not in sel.model_sizes


def test_breakpoints_ties_go_to_smaller_model():
    sel = selection_breakpoints([10, 6, 5])
    assert sel.select(4.0) == 0 and sel.select(1.0) == 1
    # collinear middle model never wins
    assert selection_breakpoints([10, 6, 2]).intervals == ((0.0, 4.0, 2), (4.0, INF, 0))
    # equal losses: the smaller model wins everywhere
    assert selection_breakpoints([3, 3]).intervals == ((0.0, INF, 0),)


def test_breakpoints_skip_absent_models():
    sel = selection_breakpoints([10, None, 4, None])
    assert sel.intervals == ((0.0, 3.0, 2), (3.0, INF, 0))
    with pytest.raises(ValueError):
        selection_breakpoints([None, 3])


def test_select_log_handles_extremes():
    sel = selection_breakpoints([10, 6, 5])
    assert sel.select_log(-1e6) == 2 and sel.select_log(1e6) == 0
    assert sel.select_log(math.log(2)) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(-1e3, 1e3)), min_size=1, max_size=11),
       st.floats(-1e3, 1e3))
def test_selection_non_increasing_in_penalty(losses, first):
    losses = [first] + losses
    sel = selection_breakpoints(losses)
    sizes = sel.model_sizes
    assert sizes == sorted(sizes, reverse=True)
    lows = [lo for lo, _, _ in sel.intervals]
    assert lows[0] == 0 and all(a < b for a, b in zip(lows, lows[1:]))
    assert sel.intervals[-1][1] == INF


@pytest.mark.parametrize("errors, expected", [
    ([0, 1, 2], (math.log(4), INF)),
    ([1, 1, 1], (-INF, INF)),
    ([2, 0, 1], (0.0, math.log(4))),
    ([1, 1, 0], (-INF, 0.0)),
])
def test_target_interval(errors, expected):
    iv = compute_target_interval(selection_breakpoints([10, 6, 5]), errors)
    assert (iv.lower, iv.upper) == pytest.approx(expected)


def test_target_interval_prefers_widest_run():
    # p=2 on (0,1), p=1 on (1,4), p=0 on (4,inf); two finite-vs-infinite runs
    iv = compute_target_interval(selection_breakpoints([10, 6, 5]), [0, 1, 0])
    assert (iv.lower, iv.upper) == (math.log(4), INF)


def test_target_interval_ignores_models_off_the_hull():
    sel = selection_breakpoints([10, 9, 1])
    iv = compute_target_interval(sel, [1, 0, 1])  # the best model is never selected
    assert iv.is_trivial


def test_target_interval_rejects_empty():
    with pytest.raises(ValueError):
        TargetInterval(1.0, 1.0)


def test_features():
    zeros = ProblemMatrix(np.zeros((100, 2), dtype=int))
    np.testing.assert_allclose(extract_features(zeros)[:, 0], [1, 0, 0, math.log(100), 0])
    counts = np.random.default_rng(0).poisson(3, (50, 1))
    X = extract_features(ProblemMatrix(np.hstack([counts, counts])))
    np.testing.assert_array_equal(X[:, 0], X[:, 1])
    X1 = extract_features(ProblemMatrix(counts))
    X2 = extract_features(ProblemMatrix(2 * counts))
    assert X1[0, 0] == X2[0, 0] and X1[3, 0] == X2[3, 0]
    assert (X2[1:3, 0] > X1[1:3, 0]).all()
    assert np.isfinite(X).all()


@pytest.mark.parametrize("x, expected", [(2, 0), (0, 1), (-1, 4), (1, 0)])
def test_squared_hinge(x, expected):
    assert squared_hinge(x) == expected


@pytest.mark.parametrize("interval, pred, expected", [
    (TargetInterval(), 3.0, 0.0),
    (TargetInterval(0, 10), 5.0, 0.0),
    (TargetInterval(0, 10), 0.0, 1.0),
    (TargetInterval(-INF, 2), 3.0, 4.0),
])
def test_surrogate_loss(interval, pred, expected):
    assert surrogate_loss(interval, pred) == pytest.approx(expected)


@settings(max_examples=200)
@given(st.floats(-20, 20), st.floats(0.01, 20), st.floats(-30, 30), st.floats(-30, 30),
       st.floats(0, 1))
def test_surrogate_convex(lower, width, a, b, t):
    iv = TargetInterval(lower, lower + width)
    mid = t * a + (1 - t) * b
    lhs = surrogate_loss(iv, mid)
    rhs = t * surrogate_loss(iv, a) + (1 - t) * surrogate_loss(iv, b)
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


def test_predict_penalty():
    X = np.array([[1.0, 1.0], [2.0, 3.0]])
    assert predict_penalty(np.zeros(2), X) == 0.0
    assert predict_penalty(np.array([1.0, 0.0]), X) == 2.0
    assert predict_penalty(np.array([0.5, 1.0]), np.hstack([X, X])) == 2 * predict_penalty(
        np.array([0.5, 1.0]), X)
    with pytest.raises(ValueError):
        predict_penalty(np.zeros(3), X)


def test_fista_huge_gamma_gives_zero():
    rng = np.random.default_rng(0)
    feats = [rng.normal(size=(3, 2)) for _ in range(10)]
    ivs = [TargetInterval(1.0, 2.0)] * 10
    w = train_fista(feats, ivs, gamma=1e6)
    assert not w.weights.any()
    assert w.meta["converged"]


def test_fista_one_dimensional():
    w = train_fista([np.ones((1, 1))], [TargetInterval(0, 10)], gamma=0.0)
    assert 1 - 1e-3 <= w.weights[0] <= 9
    assert w.meta["residual"] <= 1e-3


def test_fista_rejects_degenerate_input():
    with pytest.raises(ValueError):
        train_fista([np.ones((2, 1))], [TargetInterval()], 0.1)
    with pytest.raises(ValueError):
        train_fista([np.ones((2, 1))], [TargetInterval(0, 1)], -1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fista_reports_non_finite_loss():
    with pytest.raises(NumericalError, match="iteration"):
        train_fista([np.full((1, 1), 1e200)], [TargetInterval(0, 1)], 0.0)


def test_fista_objective_monotone():
    rng = np.random.default_rng(3)
    feats = [rng.normal(size=(4, 3)) for _ in range(60)]
    w_true = np.array([1.0, 0, -0.5, 0])
    ivs = []
    for X in feats:
        f = w_true @ X.sum(axis=1)
        ivs.append(TargetInterval(f - rng.uniform(0.1, 1), f + rng.uniform(0.1, 1)))
    w = train_fista(feats, ivs, gamma=0.01, tol=1e-6)
    hist = np.array(w.history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert w.meta["residual"] <= 1e-6


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    pooled = pooled_features([rng.normal(size=(3, 2)) for _ in range(30)])
    lower = rng.normal(size=30) - 1
    upper = lower + rng.uniform(0.5, 3, size=30)
    lower[::5], upper[1::7] = -INF, INF
    w = rng.normal(size=3)
    _, g = average_surrogate(w, pooled, lower, upper)
    h = 1e-5
    fd = np.array([(average_surrogate(w + h * e, pooled, lower, upper)[0]
                    - average_surrogate(w - h * e, pooled, lower, upper)[0]) / (2 * h)
                   for e in np.eye(3)])
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_weight_json_roundtrip():
    w = WeightVector(np.array([0.5, -1.0, 0, 0, 2.0]), gamma=0.25, meta={"iterations": 3})
    back = WeightVector.from_dict(w.to_dict())
    np.testing.assert_array_equal(back.weights, w.weights)
    assert back.gamma == 0.25 and back.feature_names == w.feature_names
    assert set(w.to_dict()) == {"featureNames", "weights", "gamma", "trainingMeta"}
