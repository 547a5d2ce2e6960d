import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rect_hits
from vdamf import kernels
from vdamf.filters import MatchState
from vdamf.optimize import (DEFAULT_CONFIG, PD_FLOOR, OptimizerConfig, _DampedSystem, fit,
                            initialize_state, min_area_axis)
from vdamf.scan import Cluster, viewing_angle
from vdamf.synth import Scene, SceneObject, SensorModel, Trajectory, render_frame


def _box_cluster(lx, ly, n=40):
    xs = np.linspace(-lx / 2, lx / 2, n)
    ys = np.linspace(-ly / 2, ly / 2, n)
    pts = np.vstack([np.column_stack([xs, np.full(n, -ly / 2)]), np.column_stack([xs, np.full(n, ly / 2)]),
                     np.column_stack([np.full(n, -lx / 2), ys]), np.column_stack([np.full(n, lx / 2), ys])])
    return Cluster.from_planar(pts + np.array([20.0, 1.0]))


def test_init_axis_aligned():
    st_ = initialize_state(_box_cluster(4.0, 1.6), 0.0)
    assert st_.t_theta == 0.0 and st_.l == pytest.approx(4.0) and st_.w == pytest.approx(1.6)


def test_init_swapped_axes():
    st_ = initialize_state(_box_cluster(1.6, 4.0), 0.0)
    assert abs(st_.t_theta) == pytest.approx(math.pi / 2)
    assert st_.l == pytest.approx(4.0) and st_.w == pytest.approx(1.6)


def test_init_heading_faces_sensor():
    st_ = initialize_state(_box_cluster(4.0, 1.6), math.pi)
    assert st_.t_theta == pytest.approx(math.pi)


def test_init_degenerate_clamps_to_minimum():
    st_ = initialize_state(_box_cluster(0.2, 0.2), 0.0)
    assert st_.l == DEFAULT_CONFIG.l_bounds[0] and st_.w == DEFAULT_CONFIG.w_bounds[0]


def test_init_heading_hint_sets_length_axis():
    st_ = initialize_state(_box_cluster(1.6, 3.0), 0.0, heading_hint=0.0)
    assert st_.t_theta == 0.0 and st_.l == pytest.approx(1.6) and st_.w == pytest.approx(3.0)


def test_min_area_axis_recovers_rotation(backend):
    st_ = MatchState(0, 0, 0.3, 1.8, 4.5)
    pts = rect_hits(st_, ("front", "rear", "left", "right"), n=30)
    assert min_area_axis(pts) == pytest.approx(0.3, abs=1e-9)


def test_min_area_axis_backends_agree():
    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(3)
    for _ in range(50):
        pts = rng.normal(size=(int(rng.integers(3, 60)), 2)) * rng.uniform(0.2, 3, 2)
        with kernels.use_backend("python"):
            a = min_area_axis(pts)
        with kernels.use_backend("compiled"):
            b = min_area_axis(pts)
        assert a == pytest.approx(b, abs=1e-9)


def _head_on(x=10.0):
    scene = Scene((SceneObject(1, "vehicle", Trajectory("static", {"x": x, "y": 0.0, "heading": math.pi})),),
                  SensorModel(range_noise=0.0))
    fr = render_frame(scene, 0.0)
    return Cluster(fr.points[fr.labels == 1]), fr.sensor


def test_head_on_noiseless_fit(backend):
    cl, sensor = _head_on()
    assert len(cl) >= 200
    phi = viewing_angle(cl, sensor)
    res = fit(cl, initialize_state(cl, phi), phi)
    assert res.converged
    # a rectangle is the same under a quarter turn with l and w swapped
    err = abs(math.remainder(res.state.t_theta - math.pi, math.pi / 2))
    assert math.degrees(err) <= 2.0
    assert abs(res.state.ty) <= 0.1


def _noisy_view(seed):
    rng = np.random.default_rng(seed)
    sensor = SensorModel(range_noise=0.05)
    r, az = rng.uniform(10, 25), rng.uniform(-0.4, 0.4) * sensor.azimuth_fov
    traj = Trajectory("static", {"x": r * math.cos(az), "y": r * math.sin(az),
                                 "heading": float(rng.uniform(-math.pi, math.pi))})
    fr = render_frame(Scene((SceneObject(1, "vehicle", traj),), sensor, seed=seed), 0.0)
    cl = Cluster(fr.points[fr.labels == 1])
    phi = viewing_angle(cl, fr.sensor)
    return cl, phi


@pytest.mark.parametrize("seed", range(6))
def test_scores_monotone_and_converged(seed, backend):
    cl, phi = _noisy_view(seed)
    res = fit(cl, initialize_state(cl, phi, axis=None), phi)
    assert res.converged and res.iterations <= DEFAULT_CONFIG.max_iterations
    assert res.score >= res.initial_score
    assert np.all(np.diff(res.scores) >= 0)
    assert res.scores[0] == res.initial_score and res.scores[-1] == res.score


def test_fixed_point():
    cl, phi = _noisy_view(1)
    first = fit(cl, initialize_state(cl, phi, axis=None), phi)
    again = fit(cl, first.state, phi)
    assert again.iterations <= 1
    d = again.state.as_array() - first.state.as_array()
    assert np.max(np.abs(d)) < 1e-3


def test_deterministic():
    cl, phi = _noisy_view(2)
    init = initialize_state(cl, phi, axis=None)
    a, b = fit(cl, init, phi), fit(cl, init, phi)
    assert a.state == b.state and a.scores == b.scores and a.iterations == b.iterations


def test_backends_agree_on_fit():
    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    for seed in range(5):
        cl, phi = _noisy_view(seed)
        init = initialize_state(cl, phi, axis=None)
        with kernels.use_backend("python"):
            a = fit(cl, init, phi)
        with kernels.use_backend("compiled"):
            b = fit(cl, init, phi)
        assert a.iterations == b.iterations and a.converged == b.converged
        np.testing.assert_allclose(a.state.as_array(), b.state.as_array(), atol=1e-8)
        np.testing.assert_allclose(a.eval.hess, b.eval.hess, rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(a.eval.point_partials_full, b.eval.point_partials_full,
                                   rtol=1e-7, atol=1e-9)


def test_sensor_refresh_path():
    cl, phi = _noisy_view(3)
    res = fit(cl, initialize_state(cl, phi, axis=None), phi, sensor=np.zeros(3))
    assert res.converged and res.score >= res.initial_score


def test_size_stays_in_bounds():
    cfg = OptimizerConfig(w_bounds=(1.0, 1.5), l_bounds=(2.0, 3.0))
    cl, phi = _noisy_view(4)
    res = fit(cl, initialize_state(cl, phi, cfg, axis=None), phi, cfg)
    assert 1.0 <= res.state.w <= 1.5 and 2.0 <= res.state.l <= 3.0


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        OptimizerConfig(lm_lambda_up=0.5)
    with pytest.raises(ValueError):
        OptimizerConfig(w_bounds=(2.0, 1.0))
    with pytest.raises(ValueError):
        OptimizerConfig.from_dict({"nope": 1})
    assert OptimizerConfig.from_dict(DEFAULT_CONFIG.to_dict()) == DEFAULT_CONFIG


def test_fit_rejects_bad_init():
    cl, phi = _noisy_view(0)
    with pytest.raises(TypeError):
        fit(cl, (0, 0, 0, 1, 1), phi)


@given(st.lists(st.floats(-50, 50), min_size=25, max_size=25), st.lists(st.floats(-5, 5), min_size=5, max_size=5),
       st.floats(1e-12, 1e3))
def test_damped_system_is_positive_definite(entries, g, lam):
    a = np.array(entries).reshape(5, 5)
    neg_h = 0.5 * (a + a.T)
    sys_ = _DampedSystem(neg_h, np.array(g))
    delta, lam_used = sys_.solve(lam)
    d = np.abs(np.diag(neg_h))
    d[:2] = 0.5 * abs(neg_h[0, 0] + neg_h[1, 1])
    d = np.maximum(d, 1.0)
    m = neg_h + lam_used * np.diag(d)
    # the congruent scaled system is the one checked against the floor
    scaled = m / np.sqrt(np.outer(d, d))
    assert np.linalg.eigvalsh(0.5 * (scaled + scaled.T))[0] > PD_FLOOR * 0.5
    np.testing.assert_allclose(m @ delta, g, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(m).max()))


@given(st.integers(0, 40), st.floats(-math.pi, math.pi), st.tuples(st.floats(-40, 40), st.floats(-40, 40)))
def test_frame_equivariance(seed, rot, shift):
    cl, phi = _noisy_view(seed)
    init = initialize_state(cl, phi, axis=None)
    base = fit(cl, init, phi)
    c, s = math.cos(rot), math.sin(rot)
    R = np.array([[c, -s], [s, c]])
    T = np.array(shift)
    m = cl.planar_means @ R.T + T
    p = init.position @ R.T + T
    moved = fit(Cluster.from_planar(m, cl.sigma),
                MatchState(p[0], p[1], init.t_theta + rot, init.w, init.l), phi + rot)
    want = base.state.position @ R.T + T
    tol = 1e-3
    assert np.max(np.abs(moved.state.position - want)) < tol
    assert abs(math.remainder(moved.state.t_theta - base.state.t_theta - rot, 2 * math.pi)) < tol
    assert moved.state.w == pytest.approx(base.state.w, abs=tol)
    assert moved.state.l == pytest.approx(base.state.l, abs=tol)
    assert moved.score == pytest.approx(base.score, rel=1e-6)
