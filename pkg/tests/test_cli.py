import csv

import numpy as np
import pytest

from restenosim import cli
from restenosim.coupling import StepFailure

FAST = ["--t-end", "0.02", "--dt", "0.01"]


def small_config(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("mesh.nx = 12\nmesh.ny = 2\ntime.output_every = 0.01\noutput.vtk = false\n")
    return str(p)


def test_run_and_transport_only(tmp_path, capsys):
    cfg = small_config(tmp_path)
    for cmd in ("run", "transport-only"):
        out = tmp_path / cmd
        assert cli.main([cmd, "--config", cfg, "--out", str(out), *FAST]) == 0
        rows = (out / "probes.csv").read_text().splitlines()
        assert len(rows) == 1 + 3
    assert "theta in" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("transport.D_P = -1\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "bad.cfg:1" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "none.cfg")]) == 1


def test_solver_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise StepFailure("Newton failed at dt_min")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", "--out", str(tmp_path)]) == 2
    assert "solver failure" in capsys.readouterr().err


def test_material_test(tmp_path):
    hist = tmp_path / "f.txt"
    hist.write_text("# F11 F12 F21 F22 theta\n1.05 0.02 0.0 0.97 1.02\n"
                    "1.1 0 0 0 1.0 0 0 0 1.05 1.1\n")
    assert cli.main(["material-test", "--f-history", str(hist), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "material_test.csv").open()))
    assert len(rows) == 2
    assert float(rows[0]["theta"]) == 1.02
    assert max(float(r["err_A"]) for r in rows) < 1e-5


def test_material_test_bad_row(tmp_path, capsys):
    hist = tmp_path / "f.txt"
    hist.write_text("1 0 0\n")
    assert cli.main(["material-test", "--f-history", str(hist), "--out", str(tmp_path)]) == 1
    assert "f.txt:1" in capsys.readouterr().err


def test_convergence_rejects_indivisible_mesh(tmp_path, capsys):
    assert cli.main(["convergence", "--levels", "4", "--out", str(tmp_path)]) == 1
    assert "divisible" in capsys.readouterr().err


def test_convergence_table(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("mesh.nx = 12\nmesh.ny = 4\n")
    assert cli.main(["convergence", "--config", str(p), "--levels", "2", "--out", str(tmp_path),
                     "--t-end", "0.04", "--dt", "0.01"]) == 0
    rows = list(csv.DictReader((tmp_path / "convergence.csv").open()))
    assert [(r["nx"], r["ny"]) for r in rows] == [("6", "2"), ("12", "4")]
    assert np.isfinite(float(rows[1]["diff_to_previous"]))


def test_section_plot(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = small_config(tmp_path)
    assert cli.main(["section-plot", "--out", str(tmp_path)]) == 1
    assert cli.main(["transport-only", "--config", cfg, "--out", str(tmp_path), *FAST]) == 0
    assert cli.main(["section-plot", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "section.png").stat().st_size > 0


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 2
