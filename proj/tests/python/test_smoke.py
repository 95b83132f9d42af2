import json
import os
import subprocess

import numpy as np
import pytest

import sqglab

SMALL = {
    "dynamics": {"resolution": 8, "dt": 0.02, "horizon": 0.2},
}


def test_grid_and_norms():
    g = sqglab.make_grid(4)
    assert g.resolution == 4
    assert g.physical_size >= 13
    # 0 < |k|^2 <= 16 on the integer lattice
    assert g.size == 48
    c = np.zeros(g.size)
    c[g.index_of(1, 0)] = 3.0
    c[g.index_of(0, 2)] = 4.0
    assert sqglab.l2_norm(g, c) == pytest.approx(5.0)
    assert sqglab.sobolev_norm(g, c, 1.0) == pytest.approx(np.sqrt(9 + 16 * 4))
    phys = sqglab.to_physical(g, c)
    assert phys.shape == (g.physical_size, g.physical_size)
    # Parseval on the uniform grid: mean of u^2 times (2 pi)^2 is |c|^2.
    assert np.mean(phys**2) * (2 * np.pi) ** 2 == pytest.approx(25.0)


def test_snapshot_round_trip(tmp_path):
    g = sqglab.make_grid(6)
    c = np.random.default_rng(1).standard_normal(g.size)
    p = tmp_path / "f.sqgf"
    sqglab.save_snapshot(p, g, c, alpha=0.75, kappa=1.0)
    raw = p.read_bytes()
    assert raw[:4] == b"SQGF"
    assert len(raw) == 36 + 8 * g.size
    s = sqglab.load_snapshot(p)
    assert s["resolution"] == 6 and s["alpha"] == 0.75
    assert np.array_equal(s["coeffs"], c)
    p.write_bytes(b"XQGF" + raw[4:])
    with pytest.raises(RuntimeError, match="byte 0"):
        sqglab.load_snapshot(p)


def test_config_errors_and_warnings():
    cfg = sqglab.effective_config({})
    assert cfg["command"] == "validate"
    assert cfg["dynamics"]["alpha"] == 0.75
    _, warnings = sqglab.parse_config(json.dumps({"dynamics": {"alpha": 0.4}}))
    assert any("outside subcritical theory" in w for w in warnings)
    with pytest.raises(sqglab.ConfigError, match="unknown key"):
        sqglab.parse_config('{"sede": 3}')
    with pytest.raises(ValueError, match="1/p < alpha - 1/2"):
        sqglab.parse_config('{"analysis": {"p": 4}}')


def test_mc_run_writes_table(tmp_path):
    cfg = dict(SMALL, command="mc", mc={"epsilons": [0.1, 0.05], "samples": 100, "eta": 0.9})
    assert sqglab.run(cfg, out=str(tmp_path / "a")) == 0
    assert sqglab.run(cfg, out=str(tmp_path / "b"), workers=2) == 0
    a = (tmp_path / "a" / "results.csv").read_text()
    assert a.splitlines()[0] == sqglab.TABLE_HEADER
    assert a == (tmp_path / "b" / "results.csv").read_text()
    rows = sqglab.read_table(tmp_path / "a" / "results.csv")
    assert [r["epsilon"] for r in rows] == [0.1, 0.05]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == sqglab.config_hash(json.dumps(manifest["config"]))
    assert sqglab.effective_config(manifest["config"]) == manifest["config"]


def test_trajectory_energy_decays():
    tr = sqglab.trajectory(dict(SMALL, simulate={"process": "deterministic"}))
    assert tr["time"][0] == 0.0 and tr["time"][-1] == pytest.approx(0.2)
    assert np.all(np.diff(tr["l2"]) <= 1e-14)
    # single mode (1,0): linear decay at rate kappa |k|^(2 alpha) = 1
    assert tr["l2"][-1] == pytest.approx(np.exp(-0.2), rel=1e-3)


def test_rate_and_interval_helpers():
    assert sqglab.analytic_rate_linear(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.1565176427496657)
    lo, hi = sqglab.wilson_interval(5, 10)
    assert (lo, hi) == pytest.approx((0.236593, 0.763407), abs=1e-6)


@pytest.mark.skipif("SQGLAB_CLI" not in os.environ, reason="CLI binary not provided")
def test_cli_exit_codes(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"command": "validate"}))
    r = subprocess.run([os.environ["SQGLAB_CLI"], "--config", str(good), "--out", str(tmp_path / "v")])
    assert r.returncode == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"comand": "mc"}')
    r = subprocess.run([os.environ["SQGLAB_CLI"], "--config", str(bad), "--out", str(tmp_path / "e")],
                       capture_output=True, text=True)
    assert r.returncode == 1
    err = json.loads((tmp_path / "e" / "error.json").read_text())
    assert err["kind"] == "config"
    assert "comand: unknown key" in err["diagnostics"]
