import math
import os

import pytest

from hlab.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_PASS, main


def test_capacity_command(capsys):
    assert main(["capacity", "--n", "3", "--r", "1.0"]) == EXIT_PASS
    out = capsys.readouterr().out
    assert float(out.strip()) == pytest.approx(4 * math.pi, rel=1e-12)
    assert main(["capacity", "--n", "3", "--r", "1.0", "--method", "numeric"]) == EXIT_PASS
    num = float(capsys.readouterr().out.strip())
    assert abs(num - 4 * math.pi) / (4 * math.pi) < 0.02


def test_capacity_command_2d_is_config_error(capsys):
    assert main(["capacity", "--n", "2", "--r", "1.0"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cell_command(capsys):
    code = main(
        ["cell", "--n", "3", "--alpha", "3", "--eps", "0.5", "--k", "auto",
         "--resolve", "4", "--max-nodes", "16"]
    )
    assert code == EXIT_PASS
    out = capsys.readouterr().out
    assert "min_w=" in out and "hole_flux=" in out


def test_run_command_pass_and_report(tmp_path, capsys):
    cfg = tmp_path / "study.cfg"
    cfg.write_text(
        "kind = corrector\n"
        "n = 3\n"
        "alpha = 3\n"
        "k = auto\n"
        "eps_list = 1/2, 1/3\n"
        "h_rule = resolve:6,max_nodes:54\n"
        f"out_dir = {tmp_path / 'out'}\n"
    )
    assert main(["run", str(cfg)]) == EXIT_PASS
    out = capsys.readouterr().out
    assert "PASS" in out
    assert os.path.exists(tmp_path / "out" / "report.csv")

    assert main(["report", str(tmp_path / "out"), "--format", "plot"]) == EXIT_PASS
    assert os.path.exists(tmp_path / "out" / "report.plot")


def test_run_command_assertion_failure(tmp_path, capsys):
    # critical trichotomy with twice the capacity: |min_w| grows, verdict fails
    cfg = tmp_path / "study.cfg"
    k_bad = 8 * math.pi
    cfg.write_text(
        "kind = corrector\n"
        "n = 3\n"
        "alpha = 3\n"
        f"k = {k_bad}\n"
        "eps_list = 1/2, 1/3\n"
        "h_rule = resolve:6,max_nodes:54\n"
        f"out_dir = {tmp_path / 'out'}\n"
    )
    assert main(["run", str(cfg)]) == EXIT_ASSERTION
    assert "FAIL" in capsys.readouterr().out


def test_run_command_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kind = corrector\neps_list = 1/4, 1/2\n")
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_run_command_solver_error(tmp_path, capsys):
    # every row fails (touching holes at c0 = 1, eps = 1/2, alpha = 2)
    cfg = tmp_path / "study.cfg"
    cfg.write_text(
        "kind = corrector\nn = 3\nalpha = 2\neps_list = 1/2\n"
        "h_rule = resolve:4,max_nodes:16\n"
        f"out_dir = {tmp_path / 'out'}\n"
    )
    assert main(["run", str(cfg)]) == 3
    assert "solver error" in capsys.readouterr().err
