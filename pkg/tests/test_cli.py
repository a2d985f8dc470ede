import json
import os

import numpy as np
import pytest

from ibfsi.cli import main
from ibfsi.constitutive import equibiaxial_stress
from ibfsi.errors import CheckpointError, ConfigError
from ibfsi.fesolid import read_fe_mesh, write_fe_mesh
from ibfsi.geometry import TubeSpec, make_tube
from ibfsi.runner import RunConfig, build_scene, checkpoint, restore, run


def quiescent_config(steps=10, dt=0.01):
    return {
        "scene": {"type": "quiescent"},
        "grid": {"dims": [8, 8], "h": 0.125},
        "fluid": {"rho": 1.0, "mu": 0.05, "dt": dt},
        "run": {"steps": steps},
    }


def small_ring_config(steps=30):
    return {
        "scene": {"type": "pressurized_ring_2d"},
        "grid": {"dims": [24, 24], "h": 2.0 / 24},
        "fluid": {"rho": 1.0, "mu": 2.0, "dt": 1e-4},
        "solid": {"c_kPa": 2.5, "b": 1.0, "beta_s_kPa": 250.0,
                  "inner_radius": 0.6, "thickness": 0.08, "stretch": 1.08,
                  "n_theta": 24, "n_radial": 2},
        "run": {"steps": steps},
        "output": {"checkpoint_every": 10},
    }


def test_minimal_zero_force_scene(tmp_path):
    cfg_path = tmp_path / "scene.json"
    cfg_path.write_text(json.dumps(quiescent_config(steps=10)))
    out = tmp_path / "out"
    rc = main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    lines = (out / "timeseries.csv").read_text().strip().splitlines()
    assert len(lines) == 11  # header + 10 rows
    assert lines[0].startswith("t,p_lv_mmHg,p_ao_mmHg,q_valve_ml_s,stroke_volume_ml")


def test_invalid_config_is_rejected_without_outputs(tmp_path):
    bad = quiescent_config()
    bad["fluid"]["dt"] = -1.0
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps(bad))
    out = tmp_path / "nope"
    rc = main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    assert rc != 0
    assert not out.exists()


def test_run_validation_errors():
    with pytest.raises(ConfigError):
        RunConfig({"grid": {"dims": [8, 8], "h": 0.1},
                   "fluid": {"dt": 0.01}})  # no steps/cycles
    with pytest.raises(ConfigError):
        RunConfig({"fluid": {"dt": 0.01}, "run": {"steps": 1}})  # no grid
    with pytest.raises(ConfigError):
        RunConfig(quiescent_config() | {"run": {"cycles": 0}})


def test_checkpoint_restore_round_trip_bitwise(tmp_path):
    cfg = RunConfig(small_ring_config(steps=20))
    out_a = tmp_path / "a"
    state_a, rows_a = run(cfg, str(out_a))
    ts_a = (out_a / "timeseries.csv").read_bytes()

    # run 10 steps, checkpoint, then resume for the remaining 10
    cfg_b = RunConfig(small_ring_config(steps=10))
    out_b = tmp_path / "b"
    run(cfg_b, str(out_b))
    cfg_b2 = RunConfig(small_ring_config(steps=20))
    out_b2 = tmp_path / "b2"
    state_b, rows_b = run(
        cfg_b2, str(out_b2), restore_path=str(out_b / "checkpoint.npz")
    )
    ts_b = (out_b2 / "timeseries.csv").read_bytes()
    assert ts_a == ts_b
    assert np.array_equal(state_a.u.parts[0], state_b.u.parts[0])
    sa = state_a.scene.fe_bodies[0].mesh.current
    sb = state_b.scene.fe_bodies[0].mesh.current
    assert np.array_equal(sa, sb)


def test_restore_of_truncated_checkpoint_fails(tmp_path):
    cfg = RunConfig(small_ring_config(steps=10))
    out = tmp_path / "r"
    run(cfg, str(out))
    ck = out / "checkpoint.npz"
    data = ck.read_bytes()
    ck.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        restore(str(ck))


def test_restore_version_mismatch(tmp_path):
    path = tmp_path / "fake.npz"
    np.savez(path, version=np.array("something-else"))
    with pytest.raises(CheckpointError):
        restore(str(path))


def test_checkpoint_contains_only_state_keys(tmp_path):
    cfg = RunConfig(small_ring_config(steps=10))
    out = tmp_path / "c"
    state, rows = run(cfg, str(out))
    with np.load(out / "checkpoint.npz") as data:
        keys = set(data.keys())
    expected = {
        "version", "config_json", "t", "n", "q_outlet", "stroke_acc",
        "rows", "u0", "u1", "uprev0", "uprev1", "solid0",
    }
    assert keys == expected


def test_fit_cli_round_trip(tmp_path, capsys):
    lam = np.linspace(1.02, 1.25, 10)
    sigma = equibiaxial_stress(lam, 12.8, 6.9)
    data = tmp_path / "biaxial.csv"
    data.write_text(
        "stretch,stress_kPa\n"
        + "\n".join(f"{l},{s}" for l, s in zip(lam, sigma))
    )
    out = tmp_path / "fit.csv"
    rc = main(["fit", "--data", str(data), "--out", str(out)])
    assert rc == 0
    header, values = out.read_text().strip().splitlines()
    assert header == "c_kPa,b,residual"
    c, b, res = (float(v) for v in values.split(","))
    assert abs(c - 12.8) / 12.8 < 0.005
    assert abs(b - 6.9) / 6.9 < 0.005


def test_unload_cli(tmp_path):
    mesh = make_tube(TubeSpec(inner_radius=1.0, thickness=0.12, n_radial=2,
                              n_theta=32))
    mesh_path = tmp_path / "ring.femesh"
    write_fe_mesh(mesh_path, mesh)
    out_path = tmp_path / "unloaded.femesh"
    rc = main([
        "unload", "--mesh", str(mesh_path), "--pressure-mmHg", "4.0",
        "--law", "c=12.8,b=6.9,beta=1280", "--out", str(out_path),
    ])
    assert rc == 0
    unloaded = read_fe_mesh(out_path)
    # the unloaded ring is smaller than the loaded one
    r_unloaded = np.linalg.norm(unloaded.nodes, axis=1).mean()
    r_loaded = np.linalg.norm(mesh.nodes, axis=1).mean()
    assert r_unloaded < r_loaded
    hist = (tmp_path / "history.csv").read_text().splitlines()
    assert hist[0] == "iter,residual"
    assert len(hist) >= 2


def test_summarize_cli(tmp_path, capsys):
    t = np.linspace(0.0, 1.0, 101)
    q = np.where(t % 0.5 < 0.25, 120.0, -4.0)
    ts = tmp_path / "timeseries.csv"
    with open(ts, "w") as f:
        f.write("t,p_lv_mmHg,p_ao_mmHg,q_valve_ml_s,stroke_volume_ml\n")
        for ti, qi in zip(t, q):
            f.write(f"{ti},0.0,0.0,{qi},0.0\n")
    out = tmp_path / "summary.csv"
    rc = main(["summarize", "--timeseries", str(ts), "--period", "0.5",
               "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "stroke_volume_mean_ml" in text


def test_probe_columns(tmp_path):
    cfg_raw = small_ring_config(steps=5)
    cfg_raw["output"]["probes"] = [
        {"name": "wall", "kind": "solid", "mesh": 0, "node": 0},
        {"name": "mid", "kind": "station", "point": [1.0, 1.0]},
    ]
    cfg = RunConfig(cfg_raw)
    out = tmp_path / "p"
    run(cfg, str(out))
    header = (out / "timeseries.csv").read_text().splitlines()[0].split(",")
    assert "probe_wall_dx" in header
    assert "probe_mid_ux" in header
