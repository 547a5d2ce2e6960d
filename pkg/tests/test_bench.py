import pytest

from vdamf import kernels
from vdamf.bench import bench_clusters, fit_benchmark, summarize, track_benchmark
from vdamf.synth import render_frames, scenario_many


def test_bench_clusters_exact_size_and_seeded():
    a = bench_clusters(4, hits=50, seed=1)
    b = bench_clusters(4, hits=50, seed=1)
    assert all(len(cl) == 50 for cl, _ in a)
    assert all((x.points == y.points).all() for (x, _), (y, _) in zip(a, b))
    with pytest.raises(ValueError):
        bench_clusters(0)


def test_summarize():
    s = summarize([1.0, 2.0, 3.0])
    assert s["n"] == 3 and s["mean_ms"] == 2.0 and s["median_ms"] == 2.0 and s["max_ms"] == 3.0


def test_fit_benchmark_report():
    rep = fit_benchmark(4, hits=60, warmup=1)
    assert set(rep["backends"]) == set(kernels.BACKENDS)
    for rec in rep["backends"].values():
        assert rec["n"] == 4 and rec["mean_ms"] > 0
    if len(kernels.BACKENDS) == 2:
        assert rep["speedup"] > 1.0


def test_track_benchmark_report():
    rep = track_benchmark(render_frames(scenario_many(n=4), 5))
    assert rep["frames"] == 5 and rep["targets_per_frame"] > 0
    assert "fit" in rep["stage_ms_per_frame"]
