import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointer_qbm.grid import Grid, GridState
from pointer_qbm.io import (MAGIC, CheckpointError, dumps_json, fmt_float, read_checkpoint,
                            read_csv, read_trajectories, write_checkpoint, write_csv,
                            write_manifest, write_trajectories)
from pointer_qbm.unravel import TrajectoryRecord


def test_checkpoint_round_trip(tmp_path):
    g = Grid.centered(64, 0.5, 8.0)
    psi = np.exp(-(g.x - 0.5) ** 2) * np.exp(0.3j * g.x)
    s = GridState(g, psi, 12.5, time=0.75)
    f = tmp_path / "a.psi"
    write_checkpoint(f, s)
    raw = f.read_bytes()
    assert raw[:8] == MAGIC and len(raw) == 48 + 8 * 64
    r = read_checkpoint(f)
    assert r.kappa == 12.5 and r.time == 0.75 and r.grid == g
    assert np.array_equal(r.psi, psi.astype(np.complex64).astype(complex))


def test_checkpoint_errors(tmp_path):
    f = tmp_path / "bad.psi"
    f.write_bytes(b"not a checkpoint at all, definitely not" * 2)
    with pytest.raises(CheckpointError):
        read_checkpoint(f)
    g = Grid.centered(8, 0.0, 1.0)
    write_checkpoint(f, GridState(g, np.ones(8), 1.0))
    f.write_bytes(f.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        read_checkpoint(f)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "missing.psi")
    assert issubclass(CheckpointError, IOError)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(v):
    assert float(fmt_float(v)) == v


def test_nonfinite_formats():
    assert fmt_float(math.nan) == "nan" and fmt_float(-math.inf) == "-inf"
    assert dumps_json({"a": math.nan}) == '{\n  "a": null\n}\n'


def test_json_is_deterministic_and_sorted():
    doc = {"b": [1, 2.5, 0.1], "a": {"y": np.float64(1 / 3), "x": np.int64(3)}, "c": None}
    s = dumps_json(doc)
    assert s == dumps_json(dict(reversed(list(doc.items()))))
    assert s.index('"a"') < s.index('"b"') < s.index('"c"')
    assert "0.33333333333333331" in s


def test_csv_round_trip(tmp_path):
    f = tmp_path / "t.csv"
    rows = [(1, 0.1, True), (2, 1e-300, False)]
    write_csv(f, ["i", "v", "flag"], rows)
    h, d = read_csv(f)
    assert h == ["i", "v", "flag"]
    assert d[1, 1] == 1e-300 and d[0, 2] == 1.0


def test_trajectory_file_round_trip(tmp_path):
    t = np.linspace(0, 1, 5)
    recs = []
    for i in range(3):
        m = np.random.default_rng(i).normal(size=(5, 5))
        recs.append(TrajectoryRecord(i, i, t, m, np.array([])))
    f = tmp_path / "tr.csv"
    write_trajectories(f, recs)
    ids, tt, x, p = read_trajectories(f)
    assert list(ids) == [0, 1, 2] and np.array_equal(tt, t)
    assert np.array_equal(x[1], recs[1].moments[:, 0])
    assert np.array_equal(p[2], recs[2].moments[:, 1])


def test_manifest(tmp_path):
    p = write_manifest(tmp_path, "demo", {"kappa": 2.0}, 5, 0.1, outputs=[tmp_path / "x.csv"],
                       results={"k": 1})
    text = p.read_text()
    assert p.name == "demo.manifest.json"
    for key in ('"config"', '"seed": 5', '"version"', '"wall_time_s"', '"x.csv"', '"results"'):
        assert key in text
