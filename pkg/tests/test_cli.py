import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import scalar_plant
from secindex.cli import EXIT_FAIL, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NOT_PE, EXIT_OK, main
from secindex.io import read_trajectory, write_system, write_trajectory
from secindex.linsys import Trajectory, simulate


@pytest.fixture(scope="module")
def platoon_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("plat")
    data = d / "p5.csv"
    assert main(["generate", "--platoon", "5", "--N", "200", "--L", "10", "--seed", "7", "-o", str(data)]) == 0
    return data, d / "p5.json"


def _rows(path):
    return path.read_text().splitlines()


def test_generate_platoon5(platoon_files):
    data, system = platoon_files
    lines = _rows(data)
    assert len(lines) == 201
    assert lines[0] == "k," + ",".join(f"u{j}" for j in range(1, 6)) + "," + ",".join(f"y{j}" for j in range(1, 11))
    doc = json.loads(system.read_text())
    assert np.array(doc["A"]).shape == (10, 10) and doc["nu"] == 0


def test_generate_single_vehicle_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["generate", "--platoon", "1", "--N", "40", "--L", "2", "-o", str(out)]) == 0
    tr = read_trajectory(a)
    assert (tr.N, tr.m, tr.p) == (40, 1, 2)
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_generate_random(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["generate", "--random", "--n", "3", "--m", "1", "--p", "2", "--seed", "4", "-o", str(out)]) == 0
    assert read_trajectory(out).N >= (1 + 1) * (3 + 2 * 3) - 1


def test_generate_short_data_exit_code(tmp_path):
    out = tmp_path / "s.csv"
    with pytest.warns(UserWarning, match="below"):
        rc = main(["generate", "--platoon", "2", "--N", "20", "--L", "5", "-o", str(out)])
    assert rc == EXIT_NOT_PE


def test_pe_check(platoon_files, tmp_path, capsys):
    data, system = platoon_files
    assert main(["pe-check", "--data", str(data), "--L", "10", "--system", str(system)]) == EXIT_OK
    assert "order 30" in capsys.readouterr().out
    flat = tmp_path / "flat.csv"
    write_trajectory(flat, Trajectory(np.zeros((30, 1)), np.zeros((30, 1))))
    assert main(["pe-check", "--data", str(flat), "--L", "2", "--n-hat", "1"]) == EXIT_NOT_PE


def _scalar_files(tmp_path, nu, N=40, seed=0):
    sys_, _ = scalar_plant(nu)
    rng = np.random.default_rng(seed)
    tr = simulate(sys_, rng.standard_normal(1), rng.standard_normal((N, 1)))
    write_trajectory(tmp_path / "s.csv", tr)
    write_system(tmp_path / "s.json", sys_, nu)
    return tmp_path / "s.csv", tmp_path / "s.json"


def test_non_pe_refused_unless_forced(tmp_path, capsys):
    data, system = _scalar_files(tmp_path, 0, N=8)
    args = ["rho", "--data", str(data), "--L", "2", "--system", str(system), "--threads", "1"]
    assert main(args) == EXIT_NOT_PE
    assert "not persistently exciting" in capsys.readouterr().err
    with pytest.warns(UserWarning, match="--force"):
        assert main(args + ["--force"]) == EXIT_OK


def test_compare_all_sensors_protected(tmp_path, capsys):
    data, system = _scalar_files(tmp_path, 1)
    rc = main(["compare", "--data", str(data), "--L", "1", "--system", str(system), "--threads", "1"])
    assert rc == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [r["component"] for r in doc["components"]] == ["u1"]
    row = doc["components"][0]
    assert row["delta"] == "inf" and row["rho"] == "inf" and row["rho_upper"] == "inf"
    assert doc["meta"]["pe_ok"] is True


def test_compare_csv_output(tmp_path):
    data, system = _scalar_files(tmp_path, 0)
    out = tmp_path / "rep.csv"
    rc = main(["compare", "--data", str(data), "--L", "1", "--system", str(system), "--threads", "1",
               "--format", "csv", "-o", str(out)])
    assert rc == EXIT_OK
    assert _rows(out) == ["component,delta,rho,rho_upper", "u1,2,2,2", "y1,2,2,2"]
    assert _rows(tmp_path / "rep_time.csv")[0] == "component,t_delta,t_rho,t_rho_upper"


def test_delta_and_rho_commands(platoon_files, capsys):
    data, system = platoon_files
    assert main(["delta", "--system", str(system), "-c", "u5", "-c", "y1"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [(r["component"], r["delta"]) for r in doc["components"]] == [("u5", 3), ("y1", 4)]
    rc = main(["rho-bound", "--data", str(data), "--L", "10", "--system", str(system), "-c", "y9", "--threads", "1"])
    assert rc == EXIT_OK
    row = json.loads(capsys.readouterr().out)["components"][0]
    assert row["rho"] is None and row["rho_upper"] >= 3


def test_compare_platoon_subset(platoon_files, capsys):
    data, system = platoon_files
    rc = main(["compare", "--data", str(data), "--L", "10", "--system", str(system),
               "-c", "u5", "-c", "y1", "--max-card", "4", "--threads", "2"])
    assert rc == EXIT_OK
    rows = {r["component"]: r for r in json.loads(capsys.readouterr().out)["components"]}
    assert rows["u5"]["delta"] == rows["u5"]["rho"] == 3
    assert rows["y1"]["delta"] == rows["y1"]["rho"] == 4


def test_verify_attack(platoon_files, capsys):
    data, system = platoon_files
    base = ["verify-attack", "--data", str(data), "--L", "10", "--system", str(system)]
    assert main(base + ["--gamma", "u5,y9,y10", "-c", "u5"]) == EXIT_OK
    assert "-> pass" in capsys.readouterr().out
    assert main(base + ["--gamma", "y1", "-c", "y1"]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().out
    assert main(base + ["--gamma", "u5,y9,y10", "-c", "u5", "--tamper"]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL" in out and "replay max|y|/max|a|" in out


def test_input_errors(platoon_files, tmp_path, capsys):
    data, system = platoon_files
    base = ["verify-attack", "--data", str(data), "--L", "10", "--system", str(system)]
    assert main(base + ["--gamma", "u5,y11", "-c", "u5"]) == EXIT_INPUT
    assert main(base + ["--gamma", "u5,y9", "-c", "y10"]) == EXIT_INPUT
    assert main(["pe-check", "--data", str(tmp_path / "missing.csv"), "--L", "2"]) == EXIT_INPUT
    assert main(["rho", "--data", str(data), "--L", "0"]) == EXIT_INPUT
    capsys.readouterr()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "secindex", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "pe-check", "delta", "rho", "rho-bound", "compare", "verify-attack"):
        assert cmd in out.stdout
