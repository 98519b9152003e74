import csv
import json
import time

import numpy as np
import pytest

from microgrid_mor.cli import main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_eig_default_is_stable(capsys):
    assert main(["eig", "--model", "hifi3", "table1_cascade"]) == 0
    out, err = capsys.readouterr()
    assert out.splitlines()[0] == "re,im,kind"
    assert len(out.splitlines()) == 16
    assert "stable" in err


def test_eig_full_at_three_quarter_percent_is_unstable(tmp_path, capsys):
    assert main(["eig", "--model", "full", "--kp", "0.75", "table1_cascade", "--out", str(tmp_path)]) == 2
    rows = _rows(tmp_path / "eig_full.csv")
    assert len(rows) == 40
    assert float(rows[1][0]) > 0  # sorted by decreasing real part


def test_malformed_scenario_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "name": "x",\n  ]\n')
    assert main(["eig", str(path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_unknown_fixture_is_an_error(capsys):
    assert main(["eig", "no_such_scenario"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_sweep_three_models(tmp_path, capsys):
    argv = ["sweep", "twobus", "--grid", "25x6", "--out", str(tmp_path)]
    for kind in ("full", "simple3", "hifi3"):
        argv += ["--model", kind]
    assert main(argv) == 0
    boundaries = {}
    for kind in ("full", "simple3", "hifi3"):
        grid = _rows(tmp_path / kind / "grid.csv")
        assert grid[0] == ["kp", "kq", "stable"] and len(grid) == 151
        boundaries[kind] = {float(q): float(p) for p, q in _rows(tmp_path / kind / "boundary.csv")[1:]}
    for kq, kp in boundaries["full"].items():
        assert boundaries["simple3"].get(kq, np.inf) > kp


def test_sweep_empty_boundary(tmp_path):
    argv = ["sweep", "table1_cascade", "--kp", "5", "--kp-range", "3", "5", "--grid", "3x2", "--model", "full", "--out", str(tmp_path)]
    assert main(argv) == 0
    assert _rows(tmp_path / "full" / "boundary.csv") == [["kp", "kq"]]


def test_sweep_100_by_100_is_quick(tmp_path):
    start = time.perf_counter()
    assert main(["sweep", "twobus", "--grid", "100x100", "--out", str(tmp_path)]) == 0
    assert time.perf_counter() - start < 60


def test_critical_reports_percent(capsys):
    assert main(["critical", "table1_cascade", "--model", "hifi3", "--bracket", "0.1", "5"]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    value = float(line.split("=")[1].strip().rstrip("%"))
    assert 0.78 <= value <= 0.79


def test_critical_without_sign_change_fails(capsys):
    assert main(["critical", "table1_cascade", "--model", "full", "--bracket", "0.1", "0.2"]) == 1
    assert "both ends stable" in capsys.readouterr().err


def test_reduce_with_algebraic_rows_matches_schur(tmp_path, rng):
    a_ss, a_sf, a_fs = rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2, 3))
    a_ff = rng.normal(size=(2, 2)) - 3 * np.eye(2)
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"a_ss": a_ss.tolist(), "a_sf": a_sf.tolist(), "a_fs": a_fs.tolist(), "a_ff": a_ff.tolist(), "gamma": [0, 0]}))
    assert main(["reduce", str(path), "--out", str(tmp_path)]) == 0
    got = np.array([[float(v) for v in r] for r in _rows(tmp_path / "reduced_order1.csv")[1:]])
    np.testing.assert_allclose(got, a_ss - a_sf @ np.linalg.solve(a_ff, a_fs), rtol=1e-13)


def test_reduce_missing_key(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"a_ss": [[1]]}))
    assert main(["reduce", str(path)]) == 1
    assert "missing keys" in capsys.readouterr().err


def test_simulate_csv_monotone_and_deterministic(tmp_path, capsys):
    argv = ["simulate", "table1_cascade", "--model", "hifi3", "--t-end", "1.0", "--perturb", "random", "--seed", "3"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "trajectory_hifi3.csv").read_text()
    assert a == (tmp_path / "b" / "trajectory_hifi3.csv").read_text()
    t = [float(r[0]) for r in _rows(tmp_path / "a" / "trajectory_hifi3.csv")[1:]]
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.0) and all(np.diff(t) > 0)


def test_bench_state_counts(tmp_path, capsys):
    assert main(["bench", "--n", "5", "25", "--repeats", "1", "--t-end", "0.02", "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert table.startswith("| model |")
    rows = _rows(tmp_path / "bench.csv")[1:]
    states = {(r[0], int(r[1])): int(r[2]) for r in rows}
    assert states[("hifi3", 5)] == 15 and states[("hifi3", 25)] == 75
    assert states[("full", 5)] >= 2.5 * 15


def test_plotdata_fig5(tmp_path):
    assert main(["plotdata", "fig5", "--grid", "8x8", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "fig5_eigenvalues.dat").read_text()
    assert text.startswith("# re im kp_percent model")
    assert text.count("\n\n\n") == 2
