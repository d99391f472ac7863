"""Tests of the command line front end and report outputs."""

import csv
import math

import numpy as np
import pytest

from elastodtn.cli import main, parse_config, verify

EXAMPLE1 = """
# flat surface example
geometry = flat
lambda = 1.0
mu = 1.0
omega = 2*pi
theta1 = pi/6
theta2 = pi/6
Lambda1 = 1.0
Lambda2 = 1.0
h = 0.3
divisions = 5,5,3
eps_N_target = 1e-6
"""


def write_config(tmp_path, text, **overrides):
    lines = [text]
    for key, value in overrides.items():
        lines.append(f"{key} = {value}")
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines))
    return path


def test_parse_config_defaults_and_values(tmp_path):
    path = write_config(tmp_path, EXAMPLE1)
    cfg = parse_config(path)
    assert cfg["geometry"] == "flat"
    assert cfg["divisions"] == "5,5,3"
    assert cfg["tau"] == "0.5"            # default preserved
    with pytest.raises(ValueError):
        parse_config(write_config(tmp_path, "nonsense_key = 1"))


def test_dry_run_prints_truncation_order(tmp_path, capsys):
    path = write_config(tmp_path, EXAMPLE1)
    assert main(["adapt", str(path), "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "truncation order N =" in out
    assert not (tmp_path / "out").exists()


def test_invalid_material_exits_2(tmp_path, capsys):
    path = write_config(tmp_path, EXAMPLE1, **{"lambda": "-5.0"})
    assert main(["solve", str(path), "--dry-run"]) == 2
    assert "error:" in capsys.readouterr().err


def test_solve_writes_outputs(tmp_path):
    outdir = tmp_path / "out1"
    path = write_config(tmp_path, EXAMPLE1, outdir=outdir)
    assert main(["solve", str(path)]) == 0
    assert (outdir / "solution.vtk").exists()
    assert (outdir / "config.txt").exists()
    assert (outdir / "efficiencies.png").exists()
    with open(outdir / "efficiencies.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n1", "n2", "type", "efficiency"]
    kinds = {(int(r[0]), int(r[1]), r[2]) for r in rows[1:]}
    assert (0, 0, "c") in kinds and (0, 0, "s") in kinds
    total = sum(float(r[3]) for r in rows[1:])
    assert abs(total - 1.0) < 0.3


def test_adapt_writes_convergence_table(tmp_path):
    outdir = tmp_path / "out2"
    path = write_config(tmp_path, EXAMPLE1, outdir=outdir,
                        max_dofs=1200, divisions="4,4,2")
    assert main(["adapt", str(path)]) == 0
    with open(outdir / "convergence.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "n_dofs", "n_tets", "N", "eps_h", "eps_N",
                       "h1_error", "efficiency_sum", "wall_seconds"]
    dofs = [int(r[1]) for r in rows[1:]]
    assert dofs == sorted(dofs) and dofs[-1] >= 1200
    assert all(r[6] != "" for r in rows[1:])      # flat: h1 error known
    assert (outdir / "convergence.png").exists()


def test_adapt_single_iteration_csv(tmp_path):
    outdir = tmp_path / "out3"
    path = write_config(tmp_path, EXAMPLE1, outdir=outdir,
                        max_iters=1, divisions="4,4,2")
    assert main(["adapt", str(path)]) == 0
    with open(outdir / "convergence.csv") as fh:
        assert len(fh.read().strip().splitlines()) == 2


def test_bump_geometry_solve(tmp_path):
    outdir = tmp_path / "out4"
    path = write_config(
        tmp_path, EXAMPLE1, outdir=outdir, geometry="bumps", h="0.6",
        divisions="8,8,3",
        bumps="0.125,0.375,0.125,0.375,0.2; 0.625,0.875,0.625,0.875,0.2")
    assert main(["solve", str(path)]) == 0
    with open(outdir / "efficiencies.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) > 1


def test_verify_all_groups_pass(capsys):
    assert verify() == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_verify_detects_sign_error(capsys):
    assert verify(dtn_sign=-1.0) == 1
    out = capsys.readouterr().out
    assert "FAIL energy" in out


def test_verify_single_group(capsys):
    assert main(["verify", "--group", "spectral"]) == 0
    out = capsys.readouterr().out
    assert out.strip() == "PASS spectral"
