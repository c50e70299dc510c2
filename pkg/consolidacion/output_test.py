import json

import numpy as np
import pytest

from config import dump_config
from diagnostics import InvariantReport
from output import Snapshot, read_snapshot_csv, write_run_outputs, write_snapshot_csv
from scenario import build_stationary_scenario, run_scenario


@pytest.fixture
def snapshot():
    x = np.array([0.0, 0.1, 0.30000000000000004, 1.0])
    return Snapshot(
        time=250.0,
        step=1000,
        x=x,
        s=np.array([1.0, 0.5, 1 / 3, 0.0]),
        h=np.array([1.0, 1e-17, 0.0, -0.0]),
        c_p=np.array([2.5e-3, 1e-300, 0.0, 0.0]),
        v=np.array([0.0, -1.2345678901234567e-5, 3e-6, 0.0]),
    )


def test_two_node_snapshot_has_three_lines(tmp_path):
    snap = Snapshot(0.0, 0, np.array([0.0, 1.0]), np.array([0.5, 0.5]), np.zeros(2), np.zeros(2), np.zeros(2))
    path = tmp_path / snap.file_name
    write_snapshot_csv(snap, path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"x,s,h,cP,v"
    assert lines[1] == b"0.0,0.5,0.0,0.0,0.0"
    assert len(lines) == 4 and lines[-1] == b""


def test_file_name_has_step_and_time(snapshot):
    assert snapshot.file_name == "snapshot_001000_t250.0.csv"


def test_reserialization_is_byte_identical(tmp_path, snapshot):
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    write_snapshot_csv(snapshot, first)
    again = Snapshot.from_frame(read_snapshot_csv(first), snapshot.time, snapshot.step)
    write_snapshot_csv(again, second)
    assert first.read_bytes() == second.read_bytes()
    assert np.array_equal(again.s, snapshot.s)
    assert np.array_equal(again.v, snapshot.v)
    assert b"\r" not in first.read_bytes()


def test_mismatched_arrays_are_rejected():
    with pytest.raises(ValueError):
        Snapshot(0.0, 0, np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3))


def test_unwritable_destination(tmp_path, snapshot):
    with pytest.raises(OSError):
        write_snapshot_csv(snapshot, tmp_path / "missing" / "out.csv")
    assert list(tmp_path.iterdir()) == []


def test_run_outputs_are_deterministic(tmp_path):
    cfg = build_stationary_scenario(2.0, cells=4)
    outputs = []
    for name in ("a", "b"):
        snapshots, report = run_scenario(cfg)
        write_run_outputs(tmp_path / name, snapshots, report, dump_config(cfg))
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    assert outputs[0] == outputs[1]
    assert "manifest.json" in outputs[0] and "invariants.json" in outputs[0]
    assert len([n for n in outputs[0] if n.endswith(".csv")]) == 4

    manifest = json.loads(outputs[0]["manifest.json"])
    assert manifest["steps_run"] == 8
    assert [entry["step"] for entry in manifest["snapshots"]] == [2, 4, 6, 8]
    assert [entry["state_step"] for entry in manifest["snapshots"]] == [2, 4, 6, 8]
    assert manifest["config"] == dump_config(cfg)
    invariants = InvariantReport.from_json(outputs[0]["invariants.json"].decode())
    assert invariants.ok
