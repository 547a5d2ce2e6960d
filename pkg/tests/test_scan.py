import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import union_find_partition
from vdamf.scan import (Cluster, Frame, above_ground, cluster_points, merge_clusters, remove_ground,
                        viewing_angle)
from vdamf.synth import render_frame, scenario_static


def _partition(clusters):
    return {frozenset(c.indices.tolist()) for c in clusters}


def test_ground_all_at_zero_is_empty():
    pts = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
    fr = Frame(0, 0.0, [0, 0, 2], pts)
    assert remove_ground(fr).shape == (0, 3)


def test_ground_threshold():
    pts = np.array([[0, 0, 0.1], [1, 0, 0.5], [2, 0, 1.2]])
    assert above_ground(pts, 0.0, 0.3).tolist() == [False, True, True]


def test_ground_matches_generator_labels():
    fr = render_frame(scenario_static(), 0.0)
    mask = above_ground(fr.points, fr.truth["ground_height"])
    assert np.array_equal(mask, fr.labels != -1)


def test_two_points_within_gap():
    assert len(cluster_points(np.array([[0, 0, 1], [0.5, 0, 1]]), 1.0)) == 1


def test_two_points_beyond_gap():
    assert len(cluster_points(np.array([[0, 0, 1], [1.5, 0, 1]]), 1.0)) == 2


def test_random_points_match_union_find(rng):
    pts = np.column_stack([rng.uniform(0, 10, (100, 2)), np.ones(100)])
    assert _partition(cluster_points(pts, 1.0)) == union_find_partition(pts[:, :2], 1.0)


def test_gap_must_be_positive():
    with pytest.raises(ValueError):
        cluster_points(np.zeros((2, 3)), 0.0)


def test_cluster_properties():
    c = Cluster(np.array([[1.0, 2.0, 0.5], [3.0, -1.0, 0.7]]), 0.2)
    assert np.array_equal(c.planar_means, [[1, 2], [3, -1]])
    lo, hi = c.bbox
    assert lo.tolist() == [1, -1] and hi.tolist() == [3, 2]
    with pytest.raises(ValueError):
        Cluster(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Cluster(np.zeros((1, 3)), sigma=0.0)


def test_frame_rejects_bad_points():
    with pytest.raises(ValueError):
        Frame(0, 0.0, [0, 0, 0], [[np.nan, 0, 0]])
    with pytest.raises(ValueError):
        Frame(0, 0.0, [0, 0, 0], [[0, 0, 0]], labels=[1, 2])


def test_merge_concatenates():
    a = Cluster(np.ones((2, 3)), indices=[0, 1])
    b = Cluster(np.zeros((1, 3)), indices=[5])
    m = merge_clusters([a, b])
    assert len(m) == 3 and m.indices.tolist() == [0, 1, 5]


@pytest.mark.parametrize("centroid,sensor,expected", [
    ((0, 0), (10, 0), 0.0),
    ((0, 0), (0, 10), math.pi / 2),
    ((3, 4), (3, -1), -math.pi / 2),
])
def test_viewing_angle_examples(centroid, sensor, expected):
    c = Cluster.from_planar([centroid])
    assert viewing_angle(c, sensor) == pytest.approx(expected, abs=1e-15)


coords = st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=120)


@given(coords, st.floats(0.2, 3.0), st.randoms(use_true_random=False))
def test_partition_and_permutation_invariance(xy, gap, rnd):
    pts = np.column_stack([np.array(xy, dtype=float), np.ones(len(xy))])
    cl = cluster_points(pts, gap)
    part = _partition(cl)
    # a partition of all indices
    assert sum(len(c) for c in cl) == len(pts)
    assert frozenset().union(*part) == frozenset(range(len(pts)))
    assert part == union_find_partition(pts[:, :2], gap)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    shuffled = cluster_points(pts[perm], gap, indices=np.array(perm))
    assert _partition(shuffled) == part


@given(coords, st.tuples(st.floats(-50, 50), st.floats(-50, 50)), st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_viewing_angle_translation(xy, sensor, shift):
    c = Cluster.from_planar(np.array(xy))
    s = np.array(sensor)
    if np.linalg.norm(s - c.centroid) < 1e-3:
        return
    moved = Cluster.from_planar(np.array(xy) + np.array(shift))
    a, b = viewing_angle(c, s), viewing_angle(moved, s + np.array(shift))
    assert abs(math.remainder(a - b, 2 * math.pi)) < 1e-9
