import math
import subprocess
import sys

import pytest

from nomascma import bench
from nomascma.bench import CSV_HEADER, parse_csv
from nomascma.cli import main
from nomascma.hetnet import NetworkConfig, format_network_config


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "tiny.cfg"
    cfg = NetworkConfig(num_small_cells=0, users_per_bs=(2,), num_subcarriers=2, p_max=(10.0,), seed=3)
    path.write_text(format_network_config(cfg))
    return path


def test_run_csv(scenario, tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--scenario", str(scenario), "--sweep", "users", "--values", "1,2", "--seeds", "2", "--out", str(out)])
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    rows = parse_csv(text).rows
    assert [(r.axis_value, r.seed) for r in rows] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_run_twice_identical_bytes(scenario, tmp_path):
    args = ["run", "--scenario", str(scenario), "--sweep", "cells", "--values", "0,1", "--seeds", "1"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_run_plotdata_bits(scenario, tmp_path):
    out = tmp_path / "r.dat"
    args = ["run", "--scenario", str(scenario), "--sweep", "users", "--values", "2", "--seeds", "2"]
    assert main(args + ["--out", str(out), "--format", "plotdata", "--bits"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# axis=users unit=bits"
    assert lines[2].split()[0] == "2" and lines[2].split()[-1] == "2"
    nats = tmp_path / "n.dat"
    assert main(args + ["--out", str(nats), "--format", "plotdata"]) == 0
    in_nats = float(nats.read_text().splitlines()[2].split()[1])
    assert float(lines[2].split()[1]) == pytest.approx(in_nats / math.log(2), abs=1e-5)


def test_run_literal_flag(scenario, tmp_path):
    out = tmp_path / "r.csv"
    args = ["run", "--scenario", str(scenario), "--sweep", "cells", "--values", "1", "--seeds", "1"]
    assert main(args + ["--out", str(out), "--literal-scma-interference"]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_run_strict_exit_code(scenario, tmp_path, monkeypatch, capsys):
    def broken(state, cfg=None):
        raise RuntimeError("diverged")

    monkeypatch.setattr(bench, "solve_noma", broken)
    args = ["run", "--scenario", str(scenario), "--sweep", "users", "--values", "2", "--seeds", "1", "--out", str(tmp_path / "r.csv")]
    assert main(args) == 0
    assert "diverged" in capsys.readouterr().err
    assert main(args + ["--strict"]) == 1
    assert "1 of 1 scenarios failed" in capsys.readouterr().err


def test_run_missing_scenario_file(tmp_path, capsys):
    code = main(["run", "--scenario", str(tmp_path / "nope.cfg"), "--sweep", "users", "--values", "2", "--out", str(tmp_path / "r.csv")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_run_bad_values_rejected(scenario, tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--scenario", str(scenario), "--sweep", "users", "--values", "a,b", "--out", str(tmp_path / "r")])
    with pytest.raises(SystemExit):
        main(["run", "--scenario", str(scenario), "--sweep", "bs", "--values", "1", "--out", str(tmp_path / "r")])


@pytest.mark.parametrize("scheme", ["noma", "scma"])
def test_oracle(scenario, scheme, capsys):
    assert main(["oracle", "--scenario", str(scenario), "--scheme", scheme, "--grid", "30"]) == 0
    lines = capsys.readouterr().out.splitlines()
    head = dict(kv.split("=") for kv in lines[0].split())
    assert head["scheme"] == scheme
    assert float(head["sum_rate_nats"]) > 0
    assert all(line.startswith("link ") for line in lines[1:])
    assert len(lines) >= 2


def test_oracle_too_large(tmp_path, capsys):
    path = tmp_path / "big.cfg"
    path.write_text(format_network_config(NetworkConfig()))
    assert main(["oracle", "--scenario", str(path), "--scheme", "noma", "--grid", "10"]) == 2
    assert "too large" in capsys.readouterr().err


def test_complexity_table(capsys):
    assert main(["complexity", "--table"]) == 0
    out = capsys.readouterr().out
    assert "65856" in out and "360" in out
    assert out.count("row 2:") == 2


def test_complexity_csv(capsys):
    assert main(["complexity", "--table", "--csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("N,U,pi_size")
    assert len(lines) == 3


def test_complexity_needs_table_flag(capsys):
    assert main(["complexity"]) == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "nomascma.cli", "complexity", "--table"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "1920" in proc.stdout
