import subprocess
import sys

import pytest

from adaptmc.cli import main
from adaptmc.harness import parse_report, read_trace

CALL = """
[model]
spots = 100
vols = 0.2
rate = 0.05
maturity = 1
[payoff]
variant = basket-call
weights = 1
strike = 100
[algorithm]
variant = adis-xi2
n = 2000
gamma = 0.001
[run]
seed = 5
"""


@pytest.fixture
def call_ini(tmp_path):
    path = tmp_path / "call.ini"
    path.write_text(CALL)
    return path


def run_cli(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_price(capsys, call_ini):
    code, out, err = run_cli(capsys, "price", call_ini)
    assert code == 0 and not err
    rep = parse_report(out)
    assert rep["variant"] == "xi2" and rep["payoff_evals"] == "2000"
    # --seed overrides the file
    _, again, _ = run_cli(capsys, "price", call_ini, "--seed", "5")
    _, other, _ = run_cli(capsys, "price", call_ini, "--seed", "6")
    assert parse_report(again)["estimate"] == rep["estimate"] != parse_report(other)["estimate"]


def test_price_to_file(capsys, call_ini, tmp_path):
    out_file = tmp_path / "r.txt"
    code, out, _ = run_cli(capsys, "price", call_ini, "--out", out_file, "--avg-normalize", "count")
    assert code == 0 and out == ""
    assert "estimate = " in out_file.read_text()


def test_trace(capsys, call_ini, tmp_path):
    csv_path = tmp_path / "t.csv"
    code, _, _ = run_cli(capsys, "trace", call_ini, "--every", "500", "--out", csv_path)
    assert code == 0
    rows = read_trace(csv_path)
    assert [r.iter for r in rows] == [500, 1000, 1500, 2000]
    code, out, _ = run_cli(capsys, "trace", call_ini, "--every", "1000")
    assert out.startswith("iter,xi,sigma2,theta_norm,alpha,payoff_evals")
    assert len(out.strip().splitlines()) == 3


def test_replicate(capsys, call_ini):
    code, out, _ = run_cli(capsys, "replicate", call_ini, "--runs", "4")
    assert code == 0
    rep = parse_report(out)
    assert rep["runs"] == "4" and rep["completed"] == "4" and "coverage" in rep


def test_table(capsys, tmp_path):
    (tmp_path / "a.ini").write_text(CALL)
    (tmp_path / "b.ini").write_text(CALL.replace("strike = 100", "strike = 110"))
    csv_path = tmp_path / "table.csv"
    code, out, _ = run_cli(capsys, "table", tmp_path, "--out", csv_path)
    assert code == 0
    assert out.splitlines()[0].startswith("| scenario | rho | K | gamma | Price |")
    assert len(csv_path.read_text().splitlines()) == 3


@pytest.mark.parametrize(
    "argv",
    [[], ["price"], ["frobnicate", "x"], ["trace", "c.ini"], ["replicate", "c.ini", "--runs", "x"]],
)
def test_usage_errors(capsys, argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 2
    assert err.startswith("error: UsageError: ") and err.count("\n") == 1


def test_bad_counts(capsys, call_ini):
    assert run_cli(capsys, "trace", call_ini, "--every", "0")[0] == 2
    assert run_cli(capsys, "replicate", call_ini, "--runs", "0")[0] == 2


def test_config_and_file_errors(capsys, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(CALL.replace("rate = 0.05", "rate = fast").replace("n = 2000", "n = 0"))
    code, _, err = run_cli(capsys, "price", bad)
    assert code == 2 and err.startswith("error: ConfigError: ")
    assert "model.rate" in err and "algorithm.n" in err and err.count("\n") == 1
    code, _, err = run_cli(capsys, "price", tmp_path / "missing.ini")
    assert code == 2 and err.startswith("error: FileNotFoundError: ")


def test_run_error_exit_code(capsys, call_ini, monkeypatch):
    import numpy as np

    from adaptmc.config import ExperimentConfig
    from adaptmc.models import GaussianShiftModel

    nan_phi = lambda x: np.full(x.shape[0], np.nan)
    monkeypatch.setattr(ExperimentConfig, "model", lambda self, kind=None: GaussianShiftModel(nan_phi, None, 1))
    code, _, err = run_cli(capsys, "price", call_ini)
    assert code == 1
    assert err.startswith("error: RunError: iteration 1: ") and err.count("\n") == 1


def test_inconsistent_grid_is_a_config_error(capsys, tmp_path):
    path = tmp_path / "odd.ini"
    path.write_text(CALL.replace("maturity = 1", "maturity = 1.05\nsteps-per-year = 12"))
    code, _, err = run_cli(capsys, "price", path)
    assert code == 2 and err.startswith("error: ConfigError: ")


def test_module_entry_point(call_ini):
    proc = subprocess.run(
        [sys.executable, "-m", "adaptmc", "price", str(call_ini)], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0, proc.stderr
    assert "estimate = " in proc.stdout
