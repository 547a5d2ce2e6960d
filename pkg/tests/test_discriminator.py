import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vdamf.discriminator import (DEFAULT_GRID, FeatureGrid, GridConfig, LinearClassifier, bin_points,
                                 canonicalize, features, roc_auc, score, synthetic_examples, train)
from vdamf.filters import MatchState


def _box_points(rng, st_, n=200, h=1.5):
    u = rng.uniform(-0.5, 0.5, (n, 2)) * np.array([st_.l, st_.w])
    c, s = math.cos(st_.t_theta), math.sin(st_.t_theta)
    xy = u @ np.array([[c, s], [-s, c]]) + st_.position
    return np.column_stack([xy, rng.uniform(0.2, h, n)])


def test_canonical_corner_example():
    st_ = MatchState(0.0, 0.0, 0.0, 2.0, 4.0)
    cloud = canonicalize([[-2.0, -1.0, 0.5], [2.0, 1.0, 1.0], [0.0, 0.0, 0.0]], st_, (-5.0, -3.0))
    assert cloud.corner == (-1.0, -1.0) and not cloud.mirrored
    np.testing.assert_allclose(cloud.points, [[0, 0, 0.5], [4, 2, 1.0], [2, 1, 0]], atol=1e-12)


def test_canonical_ground_offset():
    cloud = canonicalize([[0.0, 0.0, 1.3]], MatchState(0, 0, 0, 2, 4), (10.0, 0.0), ground_height=0.3)
    assert cloud.points[0, 2] == pytest.approx(1.0)


@given(st.integers(0, 500), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi),
       st.tuples(st.floats(-30, 30), st.floats(-30, 30)))
def test_canonical_rigid_and_mirror_invariance(seed, theta, rot, shift):
    rng = np.random.default_rng(seed)
    st_ = MatchState(12.0, 3.0, theta, 1.8, 4.5)
    pts = _box_points(rng, st_)
    sensor = np.array([0.0, 0.0, 2.0])
    base = canonicalize(pts, st_, sensor).points
    # rigid motion of the whole scene
    c, s = math.cos(rot), math.sin(rot)
    R = np.array([[c, -s], [s, c]])
    T = np.array(shift)
    moved = np.column_stack([pts[:, :2] @ R.T + T, pts[:, 2]])
    p = R @ st_.position + T
    sm = np.concatenate([R @ sensor[:2] + T, [2.0]])
    got = canonicalize(moved, MatchState(p[0], p[1], theta + rot, 1.8, 4.5), sm).points
    np.testing.assert_allclose(got, base, atol=1e-9)
    # reflection about the x axis
    flip = np.array([1.0, -1.0, 1.0])
    mirror = canonicalize(pts * flip, MatchState(12.0, -3.0, -theta, 1.8, 4.5), sensor * flip).points
    np.testing.assert_allclose(mirror, base, atol=1e-9)


def test_bin_single_cell_and_unit_sum():
    g = bin_points(np.array([[0.1, 0.1, 0.1], [0.2, 0.05, 0.2]]))
    assert g.counts.sum() == pytest.approx(1.0)
    assert g.counts[2, 2, 0] == pytest.approx(1.0) and g.dropped == 0
    g2 = bin_points(np.array([[0.1, 0.1, 0.1], [100.0, 0.0, 0.0], [0.6, 0.1, 0.1]]))
    assert g2.dropped == 1 and g2.counts.sum() == pytest.approx(1.0)
    assert g2.counts[2, 2, 0] == pytest.approx(0.5) and g2.counts[4, 2, 0] == pytest.approx(0.5)


def test_empty_grid_is_zero():
    g = bin_points(np.array([[100.0, 0.0, 0.0]]))
    assert g.counts.sum() == 0.0 and g.dropped == 1


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(cell=0.0)
    with pytest.raises(ValueError):
        GridConfig(shape=(2, 2))
    with pytest.raises(ValueError):
        GridConfig.from_dict({"cell": 1.0, "extra": 1})
    assert GridConfig.from_dict(DEFAULT_GRID.to_dict()) == DEFAULT_GRID


def _separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    shape = (4, 3, 2)
    pos, neg = [], []
    for k in range(n):
        a = rng.uniform(0, 1, shape)
        b = a.copy()
        a[0, 0, 0] += 3.0
        b[3, 2, 1] += 3.0
        pos.append(a / a.sum())
        neg.append(b / b.sum())
    return pos, neg


def test_train_separable():
    pos, neg = _separable()
    clf = train([FeatureGrid(p, GridConfig(shape=(4, 3, 2))) for p in pos],
                [FeatureGrid(q, GridConfig(shape=(4, 3, 2))) for q in neg], reg=1e-3, iterations=400)
    acc = np.mean([score(p, clf) > 0 for p in pos] + [score(q, clf) < 0 for q in neg])
    assert acc >= 0.99 and clf.metadata["train_accuracy"] >= 0.99


def test_flipped_labels_negate_classifier():
    pos, neg = _separable(seed=1)
    cfg = GridConfig(shape=(4, 3, 2))
    a = train([FeatureGrid(p, cfg) for p in pos], [FeatureGrid(q, cfg) for q in neg], iterations=200)
    b = train([FeatureGrid(q, cfg) for q in neg], [FeatureGrid(p, cfg) for p in pos], iterations=200)
    np.testing.assert_allclose(b.weights, -a.weights, atol=1e-12)
    assert b.bias == pytest.approx(-a.bias, abs=1e-12)


def test_duplicated_training_set_unchanged():
    pos, neg = _separable(10, seed=2)
    cfg = GridConfig(shape=(4, 3, 2))
    a = train([FeatureGrid(p, cfg) for p in pos], [FeatureGrid(q, cfg) for q in neg], iterations=100)
    b = train([FeatureGrid(p, cfg) for p in pos * 2], [FeatureGrid(q, cfg) for q in neg * 2], iterations=100)
    np.testing.assert_allclose(b.weights, a.weights, atol=1e-12)


def test_train_validation():
    with pytest.raises(ValueError):
        train([], [np.zeros(DEFAULT_GRID.shape)])
    with pytest.raises(ValueError):
        train([np.zeros(DEFAULT_GRID.shape)], [np.zeros(DEFAULT_GRID.shape)], reg=0.0)


@given(st.integers(0, 1000), st.floats(-5, 5), st.floats(-5, 5))
def test_score_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    cfg = GridConfig(shape=(3, 2, 2))
    clf = LinearClassifier(rng.normal(size=12), 0.7, cfg)
    g1, g2 = rng.uniform(size=(3, 2, 2)), rng.uniform(size=(3, 2, 2))
    lhs = score(a * g1 + b * g2, clf) - clf.bias
    rhs = a * (score(g1, clf) - clf.bias) + b * (score(g2, clf) - clf.bias)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_zero_grid_scores_bias():
    clf = LinearClassifier(np.ones(DEFAULT_GRID.size), -0.25)
    assert score(np.zeros(DEFAULT_GRID.shape), clf) == -0.25
    with pytest.raises(ValueError):
        score(np.zeros((2, 2, 2)), clf)


def test_roc_auc_examples():
    assert roc_auc([3, 4], [1, 2]) == 1.0
    assert roc_auc([1, 2], [3, 4]) == 0.0
    assert roc_auc([1, 1], [1, 1]) == 0.5
    assert roc_auc([1, 3], [2]) == 0.5
    with pytest.raises(ValueError):
        roc_auc([], [1])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    clf = LinearClassifier(rng.normal(size=DEFAULT_GRID.size), 0.125, metadata={"reg": 1e-3})
    p = tmp_path / "c.json"
    clf.save(p)
    back = LinearClassifier.load(p)
    np.testing.assert_array_equal(back.weights, clf.weights)
    assert back.bias == clf.bias and back.config == clf.config and back.metadata == clf.metadata
    with pytest.raises(ValueError):
        LinearClassifier.from_dict({"weights": [], "bias": 0})


def test_features_pipeline():
    rng = np.random.default_rng(3)
    st_ = MatchState(15.0, 2.0, 0.4, 1.8, 4.5)
    g = features(_box_points(rng, st_), st_, (0.0, 0.0, 2.0))
    assert g.counts.shape == DEFAULT_GRID.shape and g.counts.sum() == pytest.approx(1.0)


def test_synthetic_examples_deterministic():
    a_pos, a_neg = synthetic_examples(3, 3, seed=5)
    b_pos, b_neg = synthetic_examples(3, 3, seed=5)
    assert len(a_pos) == 3 and len(a_neg) == 3
    for x, y in zip(a_pos + a_neg, b_pos + b_neg):
        np.testing.assert_array_equal(x.counts, y.counts)
