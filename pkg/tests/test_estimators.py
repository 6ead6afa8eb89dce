import numpy as np
import pytest
from sklearn.base import clone

from peaksegjoint import JointSegmenter, PenaltyLearner
from peaksegjoint.estimators import check_count_matrix, check_feature_matrices, check_intervals
from peaksegjoint.simulate import planted_problem


@pytest.fixture
def planted():
    return planted_problem(np.random.default_rng(0), 90, 3, 30, 60, [0, 1],
                           background=1, peak=15).problem.counts


def test_segmenter_params_and_clone():
    seg = JointSegmenter(penalty=3.0, zoom_factor=3)
    assert seg.get_params() == {"penalty": 3.0, "zoom_factor": 3, "min_bins": 6}
    twin = clone(seg)
    assert twin.get_params() == seg.get_params() and twin is not seg


def test_segmenter_small_penalty_finds_planted_peak(planted):
    seg = JointSegmenter(penalty=1.0).fit(planted)
    assert seg.n_peaks_ == 2
    mask = seg.predict()
    assert mask.shape == planted.shape
    assert mask[30:60, :2].all() and not mask[:, 2].any() and not mask[:30].any()
    means = seg.transform()
    assert means.shape == planted.shape
    assert means[45, 0] > means[10, 0]


def test_segmenter_huge_penalty_is_flat(planted):
    seg = JointSegmenter(penalty=1e9).fit(planted)
    assert seg.n_peaks_ == 0 and not seg.predict().any()
    np.testing.assert_allclose(seg.transform(), np.broadcast_to(planted.mean(axis=0), planted.shape))


def test_segmenter_fit_transform_matches(planted):
    a = JointSegmenter().fit_transform(planted)
    b = JointSegmenter().fit(planted).transform()
    np.testing.assert_array_equal(a, b)


def test_segmenter_validation():
    with pytest.raises(ValueError):
        JointSegmenter(penalty=0).fit(np.ones((10, 2)))
    with pytest.raises(ValueError):
        JointSegmenter().fit(np.ones((3, 2)))
    with pytest.raises(ValueError):
        check_count_matrix(np.ones((4, 2, 2)))
    assert check_count_matrix(np.arange(6)).S == 1


def _synthetic(rng, n=80, d=3):
    X = rng.normal(size=(n, d, 2))
    w = np.array([0.5, 0.0, -1.0])
    f = np.einsum("d,nds->n", w, X)
    y = np.column_stack([f - 1, f + 1])
    y[::4, 1] = np.inf
    return X, y


def test_learner_fit_predict_score():
    X, y = _synthetic(np.random.default_rng(1))
    learner = PenaltyLearner(gamma=0.001).fit(X, y)
    assert learner.n_features_in_ == 3
    assert learner.residual_ <= 1e-3
    assert learner.score(X, y) >= 0.95
    assert learner.predict(X).shape == (80,)
    assert clone(learner).get_params() == {"gamma": 0.001, "max_iter": 100000, "tol": 0.001}


def test_learner_accepts_lists_and_pooled_rows():
    rng = np.random.default_rng(2)
    X, y = _synthetic(rng, n=30)
    a = PenaltyLearner(tol=1e-9).fit(list(X), y).coef_
    b = PenaltyLearner(tol=1e-9).fit(X.sum(axis=2), y).coef_
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_learner_input_checks():
    with pytest.raises(ValueError):
        check_feature_matrices([])
    with pytest.raises(ValueError):
        check_feature_matrices([np.ones((2, 1)), np.ones((3, 1))])
    with pytest.raises(ValueError):
        check_feature_matrices([np.full((2, 1), np.nan)])
    with pytest.raises(ValueError):
        check_intervals([(0, 1)], 2)
    with pytest.raises(Exception):
        PenaltyLearner().predict(np.ones((2, 3)))
