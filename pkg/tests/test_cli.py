"""Command-line interface: exit codes and outputs."""

import json

import pytest

from glrstop.cli import main


def _write_config(tmp_path, **overrides):
    payload = {
        "environment": "toy",
        "setting": "unstructured",
        "criterion": "P2",
        "alpha": 0.2,
        "delta": 50.0,
        "n0": 10,
        "seed": 7,
        "t_max": 2000,
        "replications": 2,
    }
    payload.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return str(path)


def test_run_success(tmp_path, capsys):
    code = main(["run", "--config", _write_config(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "replications: 2" in out
    assert "avg stop time: 1000.00" in out
    assert "censored: 0" in out


def test_run_writes_results_csv(tmp_path, capsys):
    out_path = tmp_path / "results.csv"
    code = main(
        ["run", "--config", _write_config(tmp_path), "--out", str(out_path), "--reps", "1"]
    )
    assert code == 0
    assert out_path.exists()
    lines = out_path.read_text().splitlines()
    assert lines[0] == "# schema=1"
    assert sum(1 for l in lines if l.startswith("replication")) == 1


def test_run_censoring_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path, t_max=5, replications=1)
    assert main(["run", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert "censored" in err
    assert main(["run", "--config", cfg, "--allow-censor"]) == 0


def test_run_bad_config_exit_code(tmp_path, capsys):
    cfg = _write_config(tmp_path, criterion="P9")
    assert main(["run", "--config", cfg]) == 2
    assert "error:" in capsys.readouterr().err


def test_run_missing_file_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_run_seed_override_changes_results(tmp_path, capsys):
    cfg = _write_config(tmp_path, delta=0.4, n0=5, seed=33, t_max=10**5, replications=1)
    main(["run", "--config", cfg])
    first = capsys.readouterr().out
    assert "avg stop time: 5440.00" in first
    main(["run", "--config", cfg, "--seed", "34"])
    second = capsys.readouterr().out
    assert "avg stop time: 5440.00" not in second


def test_boundary_writes_table(tmp_path, capsys):
    out_path = tmp_path / "boundary.csv"
    code = main(["boundary", "--alpha", "0.05,0.5", "--tmax", "1000", "--out", str(out_path)])
    assert code == 0
    assert str(out_path) in capsys.readouterr().out
    lines = out_path.read_text().splitlines()
    assert lines[1] == "t,alpha,gamma,asymptotic_reference"


def test_boundary_rejects_empty_alpha(tmp_path, capsys):
    assert main(["boundary", "--alpha", ",", "--out", str(tmp_path / "b.csv")]) == 2


def test_oracle_suite_pass(capsys):
    code = main(["oracle", "--suite", "lemma2", "--reps", "20"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out
    assert "1/1 checks passed" in out


def test_oracle_failure_propagates(capsys):
    # The horizon-50 mean-one rows sit below their band at any feasible
    # path count; the command must report that honestly and exit nonzero.
    code = main(["oracle", "--suite", "martingale", "--reps", "5000"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL" in out


def test_oracle_rejects_unknown_suite(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["oracle", "--suite", "lemma9"])
    assert exc.value.code == 2
