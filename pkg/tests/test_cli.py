import csv
import json
import subprocess
import sys

import pytest

from vdamf import cli
from vdamf.config import RunConfig


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _json(out):
    return json.loads(out)


@pytest.fixture(scope="module")
def frames_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "frames.jsonl"
    assert cli.main(["generate", "--preset", "straight", "--frames", "30", "--out", str(p)]) == 0
    return p


def test_generate_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    code, out, _ = run(capsys, "generate", "--preset", "circle", "--frames", "5", "--out", a)
    assert code == 0 and _json(out)["frames"] == 5
    run(capsys, "generate", "--preset", "circle", "--frames", "5", "--out", b)
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    run(capsys, "generate", "--preset", "circle", "--frames", "5", "--seed", "9", "--out", c)
    assert a.read_bytes() != c.read_bytes()


def test_generate_from_scenario_file(tmp_path, capsys):
    from vdamf.synth import scenario_static

    sp = tmp_path / "s.json"
    sp.write_text(json.dumps(scenario_static(seed=3).to_dict()))
    code, out, _ = run(capsys, "generate", sp, "--frames", "2", "--out", tmp_path / "f.jsonl")
    assert code == 0 and _json(out)["seed"] == 3
    code, out, _ = run(capsys, "generate", sp, "--frames", "2", "--seed", "4", "--out", tmp_path / "g.jsonl")
    assert _json(out)["seed"] == 4


def test_fit_converges(frames_file, capsys):
    code, out, _ = run(capsys, "fit", frames_file, "--frame-id", "5")
    res = _json(out)
    assert code == 0 and res["converged"] is True
    assert len(res["covariance"]) == 3 and res["meta"]["command"] == "fit"


def test_track_writes_outputs(frames_file, tmp_path, capsys):
    out_path, trace = tmp_path / "t.jsonl", tmp_path / "t.csv"
    code, out, _ = run(capsys, "track", frames_file, "--out", out_path, "--trace-csv", trace)
    summary = _json(out)
    assert code == 0 and summary["frames"] == 30 and summary["tracks_confirmed"] >= 1
    lines = out_path.read_text().splitlines()
    assert len(lines) == 30
    with open(trace) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(cli.TRACE_FIELDS) == set(rows[0])


def test_train_and_discriminate(frames_file, tmp_path, capsys):
    clf = tmp_path / "clf.json"
    code, out, _ = run(capsys, "train-clf", "--synthetic", "15", "--out", clf)
    assert code == 0 and _json(out)["n_pos"] == 15
    tracks = tmp_path / "t.jsonl"
    run(capsys, "track", frames_file, "--out", tracks)
    code, out, _ = run(capsys, "discriminate", frames_file, tracks, "--classifier", clf)
    res = _json(out)
    assert code == 0 and res["tracks"]
    assert all(t["frames_scored"] > 0 for t in res["tracks"])


def test_train_from_frames(frames_file, tmp_path, capsys):
    # the straight preset holds only a vehicle, so clutter is missing
    code, _, err = run(capsys, "train-clf", "--frames", frames_file, "--out", tmp_path / "c.json")
    assert code == 2 and "both classes" in _json(err)["error"]["message"]


def test_bench_small(frames_file, tmp_path, capsys):
    out_path = tmp_path / "b.json"
    code, _, _ = run(capsys, "bench", frames_file, "--fits", "5", "--max-frames", "5", "--out", out_path)
    rep = json.loads(out_path.read_text())
    assert code == 0 and "fit" in rep and "track" in rep
    assert set(rep["fit"]["backends"]) >= {"python"}


def test_filter_surface(tmp_path, capsys):
    p = tmp_path / "s.csv"
    code, out, _ = run(capsys, "filter-surface", "--beta-deg", "30", "--step", "0.05", "--out", p)
    meta = _json(out)
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert code == 0 and len(rows) == meta["nx"] * meta["ny"]
    # energy of the sampled surface approximates one after normalization
    total = sum(float(r["alpha_s"]) ** 2 for r in rows) * 0.05**2
    assert total == pytest.approx(1.0, rel=0.02)


def test_config_dump_reproduces_run(frames_file, tmp_path, capsys):
    dump = tmp_path / "cfg.json"
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, "track", frames_file, "--seed", "7", "--dump-config", dump, "--out", a)[0] == 0
    assert RunConfig.from_dict(json.loads(dump.read_text())).seed == 7
    assert run(capsys, "track", frames_file, "--config", dump, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv", [
    ["fit", "/nonexistent/frames.jsonl"],
    ["generate", "--preset", "circle"],
    ["generate", "--preset", "nope", "--out", "x"],
    ["filter-surface", "--w", "-1", "--out", "x.csv"],
    ["bench", "--fits", "1", "--backends", "gpu"],
    ["frobnicate"],
])
def test_bad_input_exits_2(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert _json(err)["error"]["kind"] == "input"


def test_bad_config_exits_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"tracker": {"gate": -1}}))
    code, _, err = run(capsys, "filter-surface", "--config", p, "--out", tmp_path / "s.csv")
    assert code == 2


def test_runtime_failure_exits_3(frames_file, capsys, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "measure", boom)
    code, _, err = run(capsys, "fit", frames_file)
    assert code == 3 and "kaboom" in _json(err)["error"]["message"]


def test_console_entry_point(tmp_path):
    p = tmp_path / "s.csv"
    proc = subprocess.run([sys.executable, "-m", "vdamf.cli", "filter-surface", "--step", "0.5", "--out", str(p)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and p.exists()
