import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vdamf import kernels
from vdamf.filters import MatchState
from vdamf.scan import Cluster

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def random_config(rng: np.random.Generator, n_points: int = 12):
    """A (cluster, state, phi) triple with hits scattered over and around the rectangle."""
    w, l = rng.uniform(1.2, 2.6), rng.uniform(2.5, 6.0)
    st = MatchState(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-math.pi, math.pi), w, l)
    u = rng.uniform(-0.7, 0.7, size=(n_points, 2)) * np.array([l + 1.5, w + 1.0])
    c, s = math.cos(st.t_theta), math.sin(st.t_theta)
    xy = u @ np.array([[c, s], [-s, c]]) + st.position
    sigma = rng.uniform(0.08, 0.3)
    return Cluster.from_planar(xy, sigma), st, rng.uniform(-math.pi, math.pi)


def rect_hits(st: MatchState, faces=("rear", "right"), n=60, noise=0.0, seed=0):
    """Points on the named faces of the rectangle ``st`` (world frame)."""
    rng = np.random.default_rng(seed)
    pts = []
    for f in faces:
        t = rng.uniform(-0.5, 0.5, n)
        if f in ("front", "rear"):
            x = np.full(n, st.l / 2 if f == "front" else -st.l / 2)
            y = t * st.w
        else:
            y = np.full(n, st.w / 2 if f == "right" else -st.w / 2)
            x = t * st.l
        pts.append(np.column_stack([x, y]))
    u = np.vstack(pts) + rng.normal(0, noise, (n * len(faces), 2)) if noise else np.vstack(pts)
    c, s = math.cos(st.t_theta), math.sin(st.t_theta)
    return u @ np.array([[c, s], [-s, c]]) + st.position


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}
N_CRITERIA = 11


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(n, (False, "not run or errored before a verdict"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
