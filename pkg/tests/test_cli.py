import csv
import json

import pytest

from uptri.cli import main


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_duality_check_exit_zero(capsys):
    assert main(["duality-check", "--n", "32", "--cases", "1000", "--seed", "7"]) == 0


def test_spectral_verify_small(tmp_path):
    out = tmp_path / "sv.csv"
    assert main(["spectral-verify", "--max-n", "4", "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == ["n", "block", "kind", "D", "method", "gap_walk", "gap_east", "abs_diff"]
    man = json.loads((tmp_path / "sv.csv.manifest.json").read_text())
    assert man["max_abs_diff"] < 1e-9 and "sv.csv" in man["outputs"]


def test_walk_at_time_zero_is_the_identity(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["simulate-walk", "--n", "6", "--t", "0", "--out", str(out)]) == 0
    rows = read(out)[1:]
    assert len(rows) == 15 and all(r[3] == "0" for r in rows)


def test_identical_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["simulate-walk", "--n", "7", "--t", "3", "--q", "3", "--seed", "5", "--sample-dt", "0.5",
                     "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    ma = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert ma["params"]["seed"] == 5 and ma["outputs"]["a.csv"]


def test_discrete_mode_and_columns(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["simulate-walk", "--n", "6", "--t", "2", "--mode", "discrete", "--columns", "5,6", "--out", str(out)]) == 0
    assert {r[1] for r in read(out)[1:]} == {"5", "6"}


def test_seed_ranges_and_seed_column(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["front-velocity", "--L", "300", "--T", "800", "--seeds", "3..6", "--out", str(out)]) == 0
    assert [r[0] for r in read(out)[1:]] == ["3", "4", "5", "6"]


@pytest.mark.parametrize("argv", [
    ["duality-check", "--n", "1"],
    ["duality-check", "--q", "4"],
    ["simulate-walk", "--n", "0", "--t", "1", "--out", "x.csv"],
    ["simulate-east", "--n", "4", "--t", "-1", "--out", "x.csv"],
    ["rank-experiment", "--seeds", "5..2", "--out", "x.csv"],
    ["nonsense"],
])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_domain_error_exit_two(tmp_path):
    assert main(["simulate-east", "--n", "4", "--t", "1", "--density", "0.3", "--out", str(tmp_path / "e.csv")]) == 2


def test_remaining_commands_run(tmp_path):
    cmds = [
        ["simulate-east", "--n", "6", "--t", "5", "--sample-dt", "1"],
        ["tv-exact", "--n", "3", "--t-grid", "0:4:1"],
        ["tv-proxy", "--n", "10", "--t-grid", "0:100:25", "--runs", "50"],
        ["persistence", "--n", "2", "--trials", "2000"],
        ["pattern-stats", "--n", "20", "--k", "2", "--runs", "3"],
        ["rank-experiment", "--n", "40", "--rows", "1..10", "--cols", "30..40", "--schedule", "0,1000", "--seeds", "0..1"],
    ]
    for k, argv in enumerate(cmds):
        out = tmp_path / f"o{k}.csv"
        assert main(argv + ["--out", str(out)]) == 0, argv
        assert (tmp_path / f"o{k}.csv.manifest.json").exists()
        assert len(read(out)) >= 2
