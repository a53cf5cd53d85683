import json
from pathlib import Path

import pytest

from burstpdmp import _kernels
from burstpdmp.checks import check_flow
from burstpdmp.cli import main
from burstpdmp.commands import cmd_selfcheck
from burstpdmp.density import analytic_stationary, density_distance, histogram
from burstpdmp.errors import CheckFailure
from burstpdmp.io import read_csv
from burstpdmp.model import fig1_family
from burstpdmp.reduced import ReducedJumpModel

SMALL = """
simulation: {horizon: 2.0, n_replicas: 2, obs_interval: 0.5}
sampling: {n_samples: 5000, n_streams: 2}
moments: {n_replicas: 500, n_streams: 8}
density: {pde_cells: 100, pde_horizon: 1.0, n_bins: 40}
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def hashes(out: Path):
    m = json.loads((out / "manifest.json").read_text())
    return {o["path"]: o["sha256"] for o in m["outputs"]}


def test_zero_horizon_writes_header_only(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("simulation: {horizon: 0.0}\ngamma1_grid: [10.0]\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    files = list((tmp_path / "o").rglob("stream_*.csv"))
    assert len(files) == 1
    assert files[0].read_text() == "t,x,y,event\n"


@pytest.mark.parametrize("command", ["simulate", "reduce", "moments", "density", "reproduce-fig1", "reproduce-fig2"])
def test_commands_deterministic(command, small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([command, "--config", str(small_config), "--out", str(a), "--threads", "1"]) == 0
    assert main([command, "--config", str(small_config), "--out", str(b), "--threads", "3"]) == 0
    ha = hashes(a)
    assert ha and ha == hashes(b)
    m = json.loads((a / "manifest.json").read_text())
    for key in ("config_hash", "config", "seeds", "software", "wall_clock_s", "timings_s"):
        assert key in m


def test_rerun_from_manifest(small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce-fig1", "--config", str(small_config), "--out", str(a), "--seed", "77", "--gamma1", "1,10"]) == 0
    assert main(["reproduce-fig1", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert hashes(a) == hashes(b)
    assert len(hashes(a)) == 6


def test_csv_formats(small_config, tmp_path):
    out = tmp_path / "o"
    main(["reduce", "--config", str(small_config), "--out", str(out), "--gamma1", "10"])
    header, rows = read_csv(next(out.rglob("stream_*.csv")))
    assert header == ["t", "y", "event"] and {r[2] for r in rows} <= {"jump", "obs"}
    main(["moments", "--config", str(small_config), "--out", str(out / "m")])
    header, rows = read_csv(out / "m" / "moments.csv")
    assert header == ["gamma1", "moment_name", "estimate", "stderr"]
    assert "fitted_slopes" in json.loads((out / "m" / "manifest.json").read_text())
    main(["density", "--config", str(small_config), "--out", str(out / "d")])
    header, rows = read_csv(out / "d" / "distances_pde.csv")
    assert header == ["gamma1", "norm", "value"] and len(rows) == 12
    header, _ = read_csv(out / "d" / "density" / "gamma1_1.0" / "analytic.csv")
    assert header == ["y_left", "y_right", "value"]


def test_s1_reduce_writes_ode(small_config, tmp_path):
    out = tmp_path / "o"
    cfg = tmp_path / "s1.yaml"
    cfg.write_text(SMALL + "scaling: S1\n")
    assert main(["reduce", "--config", str(cfg), "--out", str(out), "--gamma1", "1"]) == 0
    header, rows = read_csv(out / "reduced" / "gamma1_1.0" / "ode.csv")
    assert header == ["t", "y", "event"] and len(rows) == 4


def test_fig1_overlay_identical_across_panels(small_config, tmp_path):
    out = tmp_path / "o"
    assert main(["reproduce-fig1", "--config", str(small_config), "--out", str(out)]) == 0
    overlays = {p.read_bytes() for p in out.rglob("analytic_y.csv")}
    assert len(list(out.rglob("analytic_y.csv"))) == 4 and len(overlays) == 1


def test_simulated_trajectories_feed_histogram(tmp_path):
    """Observations from simulate at gamma1=10 give a Y histogram near the reduced stationary law."""
    cfg = tmp_path / "c.yaml"
    cfg.write_text("simulation: {horizon: 4000.0, obs_interval: 0.5, record_jumps: false}\ngamma1_grid: [10.0]\n")
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    _, rows = read_csv(next(out.rglob("stream_*.csv")))
    y = [float(r[2]) for r in rows if float(r[0]) > 20.0]
    law = analytic_stationary(ReducedJumpModel.from_model(fig1_family().instantiate(10.0)))
    h = histogram(y, 40, y_max=law.upper_quantile(1e-6))
    assert density_distance(h, law) < 0.25


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {gamma1: -3}\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--gamma1", "a,b"]) == 2
    assert main(["nonsense"]) == 2
    # a grid this small overflows the density values
    toobig = tmp_path / "big.yaml"
    toobig.write_text("density: {y_max: 1.0e-300, pde_cells: 2, pde_horizon: 1.0}\ngamma1_grid: [1.0]\n")
    assert main(["density", "--config", str(toobig), "--out", str(tmp_path / "x")]) == 3


def test_selfcheck_passes_and_negative_controls(capsys):
    lines = []
    cmd_selfcheck(out=lines.append)
    assert all(line.startswith("[PASS]") for line in lines) and len(lines) == 4

    def broken_flow(x, y, dt, g1, g2, lam):
        # drops the transfer term whenever the rates are close
        if abs(g1 - g2) < 1e-3:
            return x * 2.718281828459045 ** (-g1 * dt), y * 2.718281828459045 ** (-g2 * dt)
        return _kernels.flow(x, y, dt, g1, g2, lam)

    assert not check_flow(flow_fn=broken_flow).passed
    with pytest.raises(CheckFailure):
        cmd_selfcheck(flow_fn=broken_flow, out=lambda s: None)
    assert not check_flow(tol=1e-14).passed


def test_selfcheck_cli_tolerance_flag():
    assert main(["selfcheck", "--flow-tol", "1e-14"]) == 4
