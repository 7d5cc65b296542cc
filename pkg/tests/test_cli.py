import json
import os
import subprocess
import sys

import pytest

from phsmg.cli import EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, main, parse_levels


def test_parse_levels():
    assert parse_levels("5") == (None, 5)
    assert parse_levels("2..4") == (2, 4)
    for bad in ("4..2", "x", "1..", ""):
        with pytest.raises(Exception):
            parse_levels(bad)


def test_solve_writes_reports(tmp_path, capsys):
    code = main(["solve", "--geometry", "square-hole", "--levels", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    status = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert status["status"] == "converged" and status["error_l1"] > 0
    assert os.path.exists(status["summary"])
    assert list(tmp_path.glob("convergence_square_with_hole_*.csv"))


def test_neumann_gmres_spellings(tmp_path, capsys):
    code = main(["run", "--bc", "neumann", "--solver", "gmres-ml", "--degree", "4",
                 "--levels", "1..3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["run"].endswith("ml_gmres")


def test_not_converged_exit_code(tmp_path, capsys):
    code = main(["solve", "--levels", "3", "--max-cycles", "2", "--out", str(tmp_path)])
    assert code == EXIT_NOT_CONVERGED
    assert '"not converged"' in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["solve", "--geometry", "disk"],
    ["solve", "--levels", "7"],
    ["solve", "--levels", "0..2"],
    ["solve", "--omega", "2.5", "--levels", "2"],
    ["solve", "--points-file", "/nonexistent/points.txt"],
    ["bogus"],
])
def test_usage_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        code = main(argv + ["--out", str(tmp_path)])
        raise SystemExit(code)
    assert exc.value.code == EXIT_USAGE


def test_sweep_matrix_and_levels(tmp_path, capsys):
    code = main(["sweep", "--geometry", "square", "annulus", "--degree", "3",
                 "--levels", "2..3", "--sweep-levels", "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("slope") == 2
    assert len(list(tmp_path.glob("sweep_*.json"))) == 2


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PHSMG_LOG_LEVEL="INFO")
    proc = subprocess.run(
        [sys.executable, "-m", "phsmg", "solve", "--levels", "2", "--out", str(tmp_path)],
        capture_output=True, text=True, env=env, timeout=600,
    )
    assert proc.returncode == 0, proc.stderr
    assert "INFO" in proc.stderr
    bad = subprocess.run([sys.executable, "-m", "phsmg", "solve", "--k", "two"],
                         capture_output=True, text=True, timeout=600)
    assert bad.returncode == EXIT_USAGE
