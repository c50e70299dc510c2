import json

import pytest

import cli
import scenario
from config import dump_config
from errors import SolverError
from output import read_snapshot_csv
from scenario import build_fill_dry_scenario, build_stationary_scenario
from verification import OracleComparison


def error_of(capsys):
    """The JSON error object printed on stderr (log lines may precede it)"""
    err = capsys.readouterr().err
    return json.loads(err[err.index("{"):])


@pytest.fixture
def stationary_file(tmp_path):
    path = tmp_path / "stationary.yaml"
    path.write_text(dump_config(build_stationary_scenario(2.0, cells=4)), encoding="utf-8")
    return path


def test_check_fill_dry_preset(capsys):
    assert cli.main(["check", "fill-dry"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["R"] == 10.0
    assert data["restrictions"]["saturation_satisfied"] is True
    assert data["restrictions"]["degenerate"] is True


def test_check_rejects_too_few_steps(tmp_path, capsys):
    path = tmp_path / "coarse.yaml"
    path.write_text(dump_config(build_fill_dry_scenario(1000.0, steps=1000)), encoding="utf-8")
    assert cli.main(["check", str(path)]) == 2
    error = error_of(capsys)
    assert error["error"] == "config"
    assert error["violations"]


def test_run_stationary_config(stationary_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(stationary_file), "--out", str(out)]) == 0
    frames = [read_snapshot_csv(p) for p in sorted(out.glob("snapshot_*.csv"))]
    assert len(frames) == 4
    for frame in frames[1:]:
        assert frame.equals(frames[0])
    assert json.loads((out / "invariants.json").read_text())["ok"] is True


def test_preset_stationary(tmp_path):
    out = tmp_path / "preset"
    assert cli.main(["preset", "stationary", "--T", "1", "--cells", "4", "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    assert len(list(out.glob("snapshot_*.csv"))) == 4


def test_missing_config_is_a_config_error(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert error_of(capsys)["error"] == "config"


def test_usage_errors():
    assert cli.main([]) == 2
    assert cli.main(["preset", "wet", "--out", "x"]) == 2


def test_solver_failure_exit_code(stationary_file, tmp_path, monkeypatch, capsys):
    def failing(*args, **kwargs):
        raise SolverError("forced failure", residual=1.0, iterations=3)

    monkeypatch.setattr(scenario, "advance_one_step", failing)
    out = tmp_path / "out"
    assert cli.main(["run", str(stationary_file), "--out", str(out)]) == 3
    error = error_of(capsys)
    assert error["error"] == "solver"
    assert (out / "manifest.json").exists()


def test_oracle_command(capsys):
    assert cli.main(["oracle", "--cases", "5"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["cases"] == 5
    assert data["max_deviation"] <= 1e-8


def test_oracle_deviation_is_an_invariant_failure(monkeypatch, capsys):
    monkeypatch.setattr(cli, "oracle_compare_small", lambda cfg: OracleComparison(1e-3, True))
    assert cli.main(["oracle", "--cases", "2"]) == 4
    assert error_of(capsys)["error"] == "invariant"


def test_converge_command(stationary_file, capsys):
    assert cli.main(["converge", str(stationary_file), "--levels", "3"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["steps"] == [8, 16, 32]
