"""Command-line round trips, determinism, and error reporting."""

import json

import numpy as np
import pytest

from flocklab import cli, storage
from flocklab.dynamics import ModelParams, ParticleState, integrate
from flocklab.measures import EmpiricalMeasure


def sim_config(tmp_path, **overrides):
    cfg = {
        "d": 1,
        "alpha": 1.5,
        "N": 6,
        "T": 0.3,
        "M": 2.0,
        "seed": 42,
        "tol": 1e-6,
        "snapshots": 9,
        "initial": {
            "density": "uniform-box",
            "density_params": {"center": [0.0], "halfwidth": 0.8},
            "velocity": "linear-shear",
            "velocity_params": {"base": [0.1], "gradient": [[0.3]]},
        },
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def stripped(path):
    doc = json.loads(path.read_text())
    doc.pop("generated_at", None)
    return json.dumps(doc, sort_keys=True)


# ---- storage round trips ----


def test_trajectory_roundtrip(tmp_path):
    params = ModelParams(d=2, alpha=1.0, N=3, T=0.2, M=2.0)
    x = np.array([[0.0, 0.1], [0.5, -0.2], [-0.4, 0.3]])
    v = np.array([[0.1, 0.0], [-0.2, 0.1], [0.0, -0.1]])
    traj = integrate(
        ParticleState(0.0, x, v),
        params,
        tol=1e-8,
        snapshot_times=np.linspace(0.0, 0.2, 5),
    )
    storage.save_trajectory(traj, tmp_path / "run")
    back = storage.load_trajectory(tmp_path / "run")
    assert back.params == params
    assert back.tol == traj.tol
    assert len(back.snapshots) == 5
    for a, b in zip(traj.snapshots, back.snapshots):
        assert a.t == b.t  # repr round trip is exact
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.v, b.v)


def test_measure_roundtrip(tmp_path):
    mu = EmpiricalMeasure(
        np.array([[0.1, -0.2, 0.3], [1.0, 2.0, -3.0]]), [0.25, 0.5]
    )
    storage.save_measure(mu, tmp_path / "m.csv")
    back = storage.load_measure(tmp_path / "m.csv")
    assert np.array_equal(back.points, mu.points)
    assert np.array_equal(back.weights, mu.weights)
    header = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert header == "weight,p1,p2,p3"


def test_measure_header_rejected(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("mass,p1\n0.5,0.0\n")
    with pytest.raises(ValueError, match="header"):
        storage.load_measure(bad)


def test_canonical_json_is_deterministic_and_plain():
    payload = {
        "b": np.float64(0.5),
        "a": np.array([1.0, np.inf]),
        "c": {"n": np.int64(3), "flag": np.bool_(True)},
    }
    text = storage.canonical_json(payload)
    assert text == storage.canonical_json(payload)
    doc = json.loads(text)
    assert doc["a"] == [1.0, None]  # non-finite floats become null
    assert doc["c"] == {"flag": True, "n": 3}
    assert list(doc.keys()) == ["a", "b", "c"]


# ---- simulate ----


def test_simulate_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = sim_config(tmp_path)
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
    for name in ("trajectory.csv", "trajectory.json", "diagnostics.csv",
                 "report.json"):
        assert (out1 / name).exists()
    assert (out1 / "trajectory.csv").read_bytes() == (
        out2 / "trajectory.csv"
    ).read_bytes()
    assert stripped(out1 / "report.json") == stripped(out2 / "report.json")
    doc = json.loads((out1 / "report.json").read_text())
    assert doc["schema_version"] == "1"
    assert doc["kind"] == "simulate"
    assert doc["config"]["seed"] == 42
    assert doc["regimes"] == {"monokinetic": True, "meanfield": True}
    assert len(doc["diagnostics"]["energy"]) == 9


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = sim_config(tmp_path)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    cli.main(["simulate", "--config", str(cfg), "--out", str(out1)])
    cli.main(["simulate", "--config", str(cfg), "--out", str(out2),
              "--seed", "7"])
    assert (out1 / "trajectory.csv").read_bytes() != (
        out2 / "trajectory.csv"
    ).read_bytes()
    doc = json.loads((out2 / "report.json").read_text())
    assert doc["config"]["seed"] == 7


# ---- dbl ----


def test_dbl_identical_files_prints_zero(tmp_path, capsys):
    mu = EmpiricalMeasure(np.array([[0.0, 0.1], [1.0, -0.2]]), [0.5, 0.5])
    storage.save_measure(mu, tmp_path / "a.csv")
    rc = cli.main(["dbl", str(tmp_path / "a.csv"), str(tmp_path / "a.csv")])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "0.0"


def test_dbl_prints_distance_and_potential(tmp_path, capsys):
    mu = EmpiricalMeasure(np.array([[0.0]]), [1.0])
    nu = EmpiricalMeasure(np.array([[0.75]]), [1.0])
    storage.save_measure(mu, tmp_path / "a.csv")
    storage.save_measure(nu, tmp_path / "b.csv")
    rc = cli.main([
        "dbl", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"),
        "--out", str(tmp_path / "o"),
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[0]) == pytest.approx(0.75, abs=1e-12)
    assert len(lines) == 3  # two union atoms follow
    doc = json.loads((tmp_path / "o" / "dbl.json").read_text())
    assert doc["distance"] == pytest.approx(0.75, abs=1e-12)
    phi = np.array(doc["potential"])
    b = np.array([1.0, -1.0])
    assert float(b @ phi) == pytest.approx(0.75, abs=1e-12)


# ---- diagnose / residual on saved trajectories ----


@pytest.fixture()
def saved_run(tmp_path):
    cfg = sim_config(tmp_path)
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_diagnose_roundtrip(saved_run, tmp_path):
    dcfg = tmp_path / "d.json"
    dcfg.write_text(json.dumps({"input": str(saved_run / "trajectory")}))
    out = tmp_path / "diag"
    assert cli.main(["diagnose", "--config", str(dcfg), "--out", str(out)]) == 0
    doc = json.loads((out / "diagnostics.json").read_text())
    assert doc["kind"] == "diagnose"
    assert len(doc["diagnostics"]["times"]) == 9
    header = (out / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "t,E,D,Dalpha,mom1,min_distance"


def test_residual_report(saved_run, tmp_path):
    rcfg = tmp_path / "r.json"
    rcfg.write_text(json.dumps({
        "input": str(saved_run / "trajectory"),
        "battery_size": 3,
        "h": 0.2,
    }))
    out = tmp_path / "res"
    assert cli.main(["residual", "--config", str(rcfg), "--out", str(out)]) == 0
    doc = json.loads((out / "residuals.json").read_text())
    assert len(doc["kinetic"]["residuals"]) == 3
    assert doc["kinetic"]["max"] == max(doc["kinetic"]["residuals"])
    assert doc["fields"]["continuity"]["max"] >= 0
    assert doc["fields"]["momentum"]["max"] >= 0
    assert doc["quadrature"]["snapshot_count"] == 9


# ---- studies ----


def mf_config(tmp_path, **overrides):
    cfg = {
        "d": 1,
        "alpha": 1.0,
        "horizon": 0.15,
        "bound": 2.0,
        "seed": 21,
        "n_list": [6, 12],
        "probe_times": [0.15],
        "tol": 1e-6,
        "quad_points": 7,
        "battery_size": 3,
        "initial": {
            "density": "uniform-box",
            "density_params": {"center": [0.0], "halfwidth": 0.8},
            "velocity": "linear-shear",
            "velocity_params": {"base": [0.1], "gradient": [[0.3]]},
        },
    }
    cfg.update(overrides)
    path = tmp_path / "mf.json"
    path.write_text(json.dumps(cfg))
    return path


def test_mfstudy_threads_and_config_roundtrip(tmp_path):
    cfg = mf_config(tmp_path)
    o1, o4 = tmp_path / "t1", tmp_path / "t4"
    assert cli.main(["mfstudy", "--config", str(cfg), "--out", str(o1),
                     "--threads", "1"]) == 0
    assert cli.main(["mfstudy", "--config", str(cfg), "--out", str(o4),
                     "--threads", "4"]) == 0
    assert stripped(o1 / "study.json") == stripped(o4 / "study.json")
    for f in sorted((o1 / "tables").glob("*.csv")):
        assert f.read_bytes() == (o4 / "tables" / f.name).read_bytes()
    # a report is itself a valid config source (embedded config reuse)
    o5 = tmp_path / "replay"
    assert cli.main(["mfstudy", "--config", str(o1 / "study.json"),
                     "--out", str(o5)]) == 0
    assert stripped(o1 / "study.json") == stripped(o5 / "study.json")
    doc = json.loads((o1 / "study.json").read_text())
    assert "threads" not in doc["config"]
    assert doc["config"]["h"] is not None  # default h resolved and embedded


def test_pairstudy_cli(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({
        "alpha": 1.5,
        "eps_list": [0.5],
        "v1": [0.3, 0.2],
        "v2": [0.3, -0.2],
        "horizon": 3.0,
        "grid_points": 256,
    }))
    out = tmp_path / "pair"
    assert cli.main(["pairstudy", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads((out / "pairstudy.json").read_text())
    assert doc["study"]["rows"][0]["t_half"] > 0
    lines = (out / "pairs.csv").read_text().splitlines()
    assert lines[0] == "eps,t_half,kernel_integral,d_integral,min_distance"
    assert len(lines) == 2


# ---- errors ----


def test_missing_config_gives_json_error_and_exit_2(tmp_path, capsys):
    out = tmp_path / "o"
    rc = cli.main(["diagnose", "--config", str(tmp_path / "nope.json"),
                   "--out", str(out)])
    assert rc == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"]["type"] == "FileNotFoundError"
    saved = json.loads((out / "error.json").read_text())
    assert saved == doc


def test_schema_violation_rejected(tmp_path, capsys):
    cfg = sim_config(tmp_path, alpha=-1.0)
    rc = cli.main(["simulate", "--config", str(cfg), "--out",
                   str(tmp_path / "o")])
    assert rc == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"]["type"] == "ValidationError"


def test_domain_error_is_machine_readable(tmp_path, capsys):
    # recipe escapes the speed bound: flagged before any integration
    cfg = sim_config(
        tmp_path,
        initial={
            "density": "uniform-box",
            "density_params": {"center": [0.0], "halfwidth": 0.8},
            "velocity": "constant",
            "velocity_params": {"value": [5.0]},
        },
    )
    rc = cli.main(["simulate", "--config", str(cfg), "--out",
                   str(tmp_path / "o")])
    assert rc == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"]["type"] == "ValueError"
    assert "bound" in doc["error"]["message"]
