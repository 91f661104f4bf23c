import csv

import numpy as np
import pytest

from viscogrid import cli


def run_cli(args):
    return cli.main(args)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def strip_wall(rows):
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]


def test_mesh_info_counts(capsys):
    assert run_cli(["mesh-info", "--levels", "7"]) == 0
    out = capsys.readouterr().out
    rows = [line.split() for line in out.strip().splitlines()[1:]]
    assert [int(r[1]) for r in rows] == [5, 13, 41, 145, 545, 2113, 8321]


def test_mesh_info_single_level(capsys):
    assert run_cli(["mesh-info", "--levels", "1"]) == 0
    out = capsys.readouterr().out
    row = out.strip().splitlines()[1].split()
    assert float(row[4]) == pytest.approx(2.0)


def test_mesh_info_zero_levels(capsys):
    assert run_cli(["mesh-info", "--levels", "0"]) == 1
    assert "levels" in capsys.readouterr().err


def test_unknown_flag_exits_one(capsys):
    assert run_cli(["solve", "--bogus", "1"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command_exits_one(capsys):
    assert run_cli(["frobnicate"]) == 1


def test_unknown_experiment_exits_one(capsys):
    assert run_cli(["experiment", "9"]) == 1
    assert "experiment" in capsys.readouterr().err


def test_solve_writes_artifacts(tmp_path, capsys):
    args = ["solve", "--model", "bingham", "--g", "0.3", "--levels", "2",
            "--finest", "3", "--max-cycles", "6", "--out", str(tmp_path)]
    code = run_cli(args)
    assert code in (0, 2)
    out = capsys.readouterr().out
    assert "status:" in out

    rows = read_csv(tmp_path / "report.csv")
    assert list(rows[0].keys()) == ["cycle", "energy", "grad_norm", "err_s",
                                    "plug_flow", "err_pf", "alpha", "wall_ms"]
    energies = [float(r["energy"]) for r in rows]
    assert all(a >= b for a, b in zip(energies, energies[1:]))
    assert all(r["err_s"] for r in rows)  # reference on by default

    sol = np.loadtxt(tmp_path / "solution.txt")
    assert sol.shape == (145, 3)
    mesh_lines = (tmp_path / "mesh.txt").read_text().splitlines()
    assert mesh_lines[0] == "145 256"
    assert list(tmp_path.glob("ref_*.txt"))

    # identical configuration reproduces the report byte for byte except wall
    first = strip_wall(rows)
    assert run_cli(args) in (0, 2)
    capsys.readouterr()
    assert strip_wall(read_csv(tmp_path / "report.csv")) == first


def test_solve_no_ref_leaves_err_s_empty(tmp_path, capsys):
    code = run_cli(["solve", "--model", "hb", "--p", "1.5", "--g", "0.1",
                    "--levels", "2", "--finest", "3", "--max-cycles", "4",
                    "--no-ref", "--out", str(tmp_path)])
    assert code in (0, 2)
    capsys.readouterr()
    rows = read_csv(tmp_path / "report.csv")
    assert all(r["err_s"] == "" for r in rows)
    assert not list(tmp_path.glob("ref_*.txt"))


def test_solve_descent_mode(tmp_path, capsys):
    code = run_cli(["solve", "--model", "hb", "--p", "1.75", "--g", "0.2",
                    "--gamma", "50", "--mode", "descent", "--levels", "1",
                    "--finest", "3", "--max-cycles", "40", "--tol", "1e-5",
                    "--out", str(tmp_path)])
    assert code in (0, 2)
    capsys.readouterr()
    rows = read_csv(tmp_path / "report.csv")
    assert len(rows) >= 2
    energies = [float(r["energy"]) for r in rows]
    assert all(a >= b for a, b in zip(energies, energies[1:]))


def test_solve_fmg_mode(tmp_path, capsys):
    code = run_cli(["solve", "--model", "casson", "--g", "0.2", "--mode", "fmg",
                    "--levels", "3", "--finest", "4", "--no-ref",
                    "--out", str(tmp_path)])
    assert code in (0, 2)
    capsys.readouterr()
    rows = read_csv(tmp_path / "report.csv")
    assert len(rows) == 3  # one row per visited level


def test_solve_without_analytic_profile(tmp_path, capsys):
    # plug radius 2g >= 1: no closed form, plug columns stay empty
    code = run_cli(["solve", "--model", "bingham", "--g", "0.6", "--levels", "2",
                    "--finest", "3", "--max-cycles", "3", "--no-ref",
                    "--out", str(tmp_path)])
    assert code in (0, 2)
    capsys.readouterr()
    rows = read_csv(tmp_path / "report.csv")
    assert all(r["err_pf"] == "" for r in rows)


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# tiny run\n"
        "model = bingham\n"
        "g = 0.3\n"
        "levels = 2\n"
        "finest = 3\n"
        "max_cycles = 2\n"
        f"out = {tmp_path}\n")
    assert run_cli(["solve", "--config", str(cfg), "--max-cycles", "3"]) in (0, 2)
    capsys.readouterr()
    rows = read_csv(tmp_path / "report.csv")
    assert len(rows) <= 3


def test_config_file_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = hb\nwibble = 3\n")
    assert run_cli(["solve", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "wibble" in err and ":2" in err


def test_config_file_rejects_bad_value(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("levels = many\n")
    assert run_cli(["solve", "--config", str(cfg)]) == 1
    assert "many" in capsys.readouterr().err


def test_invalid_level_combo(capsys):
    assert run_cli(["solve", "--levels", "9", "--finest", "3"]) == 1
    assert "levels" in capsys.readouterr().err


def test_experiment_3_csv(tmp_path, capsys):
    assert run_cli(["experiment", "3", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    rows = read_csv(tmp_path / "experiment3.csv")
    solvers = {r["solver"] for r in rows}
    assert solvers == {"mgopt", "descent"}
    for solver in solvers:
        energies = [float(r["energy"]) for r in rows if r["solver"] == solver]
        assert all(a >= b for a, b in zip(energies, energies[1:]))
    mg = [r for r in rows if r["solver"] == "mgopt"]
    assert float(mg[-1]["err_s"]) < 1e-2
    assert float(mg[-1]["err_pf"]) < 1e-2
