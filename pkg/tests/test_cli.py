import json
import subprocess
import sys

import pytest

from ris_chest.cli import build_parser, main, resolve_config

TINY = ["--rx-h", "2", "--rx-v", "2", "--tx-h", "2", "--tx-v", "1", "--n-k", "4", "--n-p", "3",
        "--n-cl", "1", "--n-sp", "2", "--set", "rho=0.5"]


def test_run_json(capsys):
    assert main(["run", *TINY, "--seed", "2", "--snr", "10"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["estimator"] == "proposed" and doc["seed"] == 2 and doc["snr_db"] == 10.0
    assert doc["error"] is None and doc["nmse"] > 0


def test_run_multiple_estimators(capsys):
    assert main(["run", *TINY, "--estimators", "qiht,omp", "--snr", "inf"]) == 0
    docs = json.loads(capsys.readouterr().out)
    assert [d["estimator"] for d in docs] == ["qiht", "omp"]


def test_run_failure_exit_code(capsys):
    code = main(["run", *TINY, "--estimators", "omp", "--set", "omp_subcarrier=99"])
    assert code == 1
    assert "out of range" in json.loads(capsys.readouterr().out)["error"]


def test_sweep_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = main(["sweep", *TINY, "--snr-grid", "0,20", "--trials", "2", "--estimators", "proposed,omp",
                 "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "estimator,snr_db,nmse_db_mean,nmse_db_stderr,trials"
    assert len(lines) == 5
    assert main(["sweep", *TINY, "--snr-grid", "5", "--trials", "1", "--estimators", "qiht"]) == 0
    assert capsys.readouterr().out.startswith("estimator,")


def test_sweep_reports_failures(tmp_path, capsys):
    code = main(["sweep", *TINY, "--snr-grid", "5", "--trials", "1", "--estimators", "omp",
                 "--set", "omp_subcarrier=99"])
    assert code == 1
    assert "failed" in capsys.readouterr().err


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    assert "selftest passed" in capsys.readouterr().out


def test_bad_inputs(tmp_path, capsys):
    assert main(["run", "--set", "bogus=1"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    with pytest.raises(SystemExit):
        main(["sweep", "--estimators", "lasso"])
    with pytest.raises(SystemExit):
        main(["run", "--set", "noequals"])


def test_config_file_and_full_scale(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("rho = 0.25\nn_p = 32\n")
    args = build_parser().parse_args(["config", "--config", str(cfg), "--full-scale"])
    run = resolve_config(args)
    assert (run.system.rx_h, run.system.tx_h, run.system.n_k, run.system.n_p) == (32, 8, 64, 32)
    assert run.system.rho == 0.25
    assert main(["config", "--config", str(cfg)]) == 0
    assert "rho = 0.25" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ris_chest", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sweep" in proc.stdout
