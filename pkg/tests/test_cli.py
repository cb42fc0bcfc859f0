import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from polariscope import cli
from polariscope import measurement as me
from polariscope.atomdata import REFERENCE_EXPERIMENT, builtin_path, load_experiment
from polariscope.errors import ConsistencyError

REF_TEXT = builtin_path(REFERENCE_EXPERIMENT).read_text()


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def manifest(path):
    return json.loads(path.read_text())


def config(tmp_path, **replace):
    text = REF_TEXT
    for old, new in replace.items():
        text = text.replace(old.replace("_", " "), new)
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return str(p)


def test_decompose(tmp_path):
    assert run(tmp_path, "decompose", "--no-plot") == 0
    head, rows = table(tmp_path / "decompose.csv")
    assert head == ["f", "fprime", "alpha0_norm", "alpha1_norm", "alpha2_norm", "residual_norm"]
    assert [r[1] for r in rows] == ["2", "3", "4", "5"]
    assert [float(x) for x in rows[0][2:5]] == [0.0, 0.0, 0.0]
    assert max(float(r[5]) for r in rows) <= 1e-12
    m = manifest(tmp_path / "decompose.json")
    assert m["command"] == "decompose"
    assert set(m) >= {"command", "config_path", "seed", "output_paths", "tool_version", "timestamp"}


def test_decompose_spin_half(tmp_path):
    assert run(tmp_path, "decompose", "--spin", "1/2", "--no-plot") == 0
    _, rows = table(tmp_path / "decompose_rank2.csv")
    assert all(float(r[1]) == 0.0 for r in rows)


def test_decompose_bad_spin(tmp_path):
    assert run(tmp_path, "decompose", "--spin", "1/3") == 2


def test_trajectory_paths(tmp_path):
    assert run(tmp_path, "trajectory", "--path", "xz", "--no-plot") == 0
    _, rows = table(tmp_path / "trajectory.csv")
    data = np.array(rows, dtype=float)
    assert len(data) == 201
    assert np.max(np.abs(data[:, 2])) < np.max(np.abs(data[:, 1])) ** 2
    assert run(tmp_path, "trajectory", "--path", "xy", "--measure", "sz", "--no-plot") == 0
    m = manifest(tmp_path / "trajectory.json")
    assert m["extras"]["crossing_frequency"] == pytest.approx(2.0, rel=1e-9)
    assert m["extras"]["other_peak"] < m["extras"]["measured_peak"] ** 2


def test_trajectory_zero_samples(tmp_path, capsys):
    assert run(tmp_path, "trajectory", "--samples", "0") == 2
    assert "samples" in capsys.readouterr().err


def test_scan_window(tmp_path):
    assert run(tmp_path, "scan", "--from", "150MHz", "--to", "1.05GHz", "--points", "25", "--samples", "101") == 0
    _, rows = table(tmp_path / "scan.csv")
    assert len(rows) == 25
    m = manifest(tmp_path / "scan.json")
    assert set(m["extras"]["slopes"]) == {"vector", "tensor"}
    assert (tmp_path / "scan.png").stat().st_size > 0


def test_scan_far_detuned_slopes(tmp_path):
    assert run(tmp_path, "scan", "--from", "50GHz", "--to", "500GHz", "--points", "6", "--log", "--samples", "41", "--no-plot") == 0
    slopes = manifest(tmp_path / "scan.json")["extras"]["slopes"]
    assert slopes["vector"]["fit"] == pytest.approx(-1.0, rel=0.03)
    assert slopes["tensor"]["fit"] == pytest.approx(-2.0, rel=0.03)


def test_scan_single_point(tmp_path):
    assert run(tmp_path, "scan", "--from", "200MHz", "--to", "300MHz", "--points", "1", "--no-plot") == 0
    _, rows = table(tmp_path / "scan.csv")
    assert len(rows) == 1
    assert "slopes" not in manifest(tmp_path / "scan.json")["extras"]


def test_scan_through_resonance(tmp_path, capsys):
    assert run(tmp_path, "scan", "--from=-300MHz", "--to", "100MHz") == 2
    err = capsys.readouterr().err
    assert "f'=5" in err and "f'=4" in err


def test_photocurrent_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1113523200")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["photocurrent", "--seed", "7", "--out", str(a)]) == 0
    assert cli.main(["photocurrent", "--seed", "7", "--out", str(b)]) == 0
    for name in ("photocurrent.csv", "photocurrent.json", "photocurrent.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    m = manifest(a / "photocurrent.json")
    assert m["seed"] == 7 and m["timestamp"] == "2005-04-15T00:00:00Z"


def test_photocurrent_variance_column(tmp_path):
    assert run(tmp_path, "photocurrent", "--fz", "1e4", "--no-plot") == 0
    head, rows = table(tmp_path / "photocurrent.csv")
    assert head == ["t", "y", "estimate", "variance", "variance_closed_form"]
    data = np.array(rows, dtype=float)
    assert np.allclose(data[:, 3], data[:, 4], rtol=1e-12, atol=0)


def test_photocurrent_no_information(tmp_path):
    assert run(tmp_path, "photocurrent", "--eta", "0", "--no-plot") == 0
    _, rows = table(tmp_path / "photocurrent.csv")
    data = np.array(rows, dtype=float)
    assert np.all(data[:, 2] == 0.0)
    assert np.all(data[:, 3] == data[0, 3])


def test_squeeze_spot_value(tmp_path):
    # choose N so that OD = 7 exactly enough, then tau = 0.05 tau_s
    base = load_experiment(builtin_path(REFERENCE_EXPERIMENT))
    n = 7.0 / (base.cloud.sigma0 / base.cloud.area)
    path = config(tmp_path, **{"atoms = 1e9": f"atoms = {n!r}"})
    cfg = load_experiment(path)
    assert cfg.cloud.od == pytest.approx(7.0, rel=1e-14)
    tau_s = 1 / me.measurement_strength(cfg.species, cfg.cloud, cfg.probe).scat_rate
    tau = 0.05 * tau_s
    assert cli.main(["squeeze", "--config", path, "--tau-grid", f"0,{tau!r} s", "--out", str(tmp_path), "--no-plot"]) == 0
    _, rows = table(tmp_path / "squeeze.csv")
    assert float(rows[0][2]) == 1.0
    assert float(rows[1][1]) == pytest.approx(0.35, rel=1e-12)
    assert float(rows[1][2]) == pytest.approx(1 / 1.35, rel=1e-12)


def test_squeeze_warnings(tmp_path):
    assert run(tmp_path, "squeeze", "--tau-grid", "0:200ms:5", "--no-plot") == 0
    m = manifest(tmp_path / "squeeze.json")
    assert len(m["warnings"]) == 3
    _, rows = table(tmp_path / "squeeze.csv")
    assert [r[4] for r in rows] == ["1", "1", "0", "0", "0"]


def test_squeeze_geometry(tmp_path, capsys):
    path = config(tmp_path, **{"theta = 90 deg": "theta = 60 deg"})
    assert cli.main(["squeeze", "--config", path, "--out", str(tmp_path)]) == 2
    assert "theta" in capsys.readouterr().err


def test_bad_config(tmp_path):
    path = config(tmp_path, **{"radius = 4 mm": "radius = 4"})
    assert cli.main(["decompose", "--config", path, "--out", str(tmp_path)]) == 2
    assert cli.main(["decompose", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2


def test_bad_tau_grid(tmp_path):
    assert run(tmp_path, "squeeze", "--tau-grid", "1,2") == 2


def test_internal_failure_exit_code(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise ConsistencyError("routes disagree")

    monkeypatch.setattr(me, "measurement_strength", broken)
    assert run(tmp_path, "photocurrent") == 3


def test_usage_errors():
    assert cli.main([]) == 2
    assert cli.main(["nonsense"]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "polariscope", "decompose", "--no-plot", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "decompose.csv").exists()
