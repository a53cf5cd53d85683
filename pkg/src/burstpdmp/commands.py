"""Experiment commands behind the ``burstpdmp`` CLI.

Each command takes a validated :class:`ExperimentConfig`, writes CSVs below
``cfg.output_dir`` and finishes with ``manifest.json``.  Random streams are
``(cfg.seed, stream_id)`` with ``stream_id = STREAM_BLOCK * grid_index + k``,
so results do not depend on the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .checks import CheckResult, FlowFn, run_selfcheck
from .config import ExperimentConfig, config_hash, config_to_dict
from .density import (
    NORMS,
    DensityGrid,
    analytic_stationary,
    density_distance,
    discrete_steady_state,
    histogram,
    solve_density_pde,
    uniform_edges,
)
from .errors import CheckFailure, UnsupportedError
from .io import RunRecorder, trajectory_rows
from .model import Model
from .moments import batch_means_se, fit_scaling_exponents, weighted_loglog_slope
from .reduced import ReducedJumpModel, ReducedODE, integrate_ode, simulate_reduced
from .simulator import (
    RngStream,
    State2D,
    default_burn_in,
    default_window,
    resolve_threads,
    simulate,
    split_counts,
    stationary_samples,
)

__all__ = [
    "STREAM_BLOCK",
    "cmd_simulate",
    "cmd_reduce",
    "cmd_moments",
    "cmd_density",
    "cmd_reproduce_fig1",
    "cmd_reproduce_fig2",
    "cmd_selfcheck",
]

STREAM_BLOCK = 1_000_000


def gamma_label(g: float) -> str:
    return f"gamma1_{float(g)!r}"


def _recorder(command: str, cfg: ExperimentConfig, layout: str) -> RunRecorder:
    seeds = {"seed": cfg.seed, "stream_layout": layout, "stream_block": STREAM_BLOCK}
    return RunRecorder(command, config_to_dict(cfg), config_hash(cfg), seeds, Path(cfg.output_dir))


def _parallel_map(fn: Callable, items, threads: Optional[int]) -> list:
    items = list(items)
    n = min(resolve_threads(threads), max(1, len(items)))
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _obs_grid(horizon: float, interval: Optional[float]) -> np.ndarray:
    """Observation times in ``(0, horizon]``; empty for a zero horizon."""
    if interval is None or horizon <= 0:
        return np.empty(0)
    n = int(np.floor(horizon / interval + 1e-9))
    return interval * np.arange(1, n + 1)


# --------------------------------------------------------------------------
# simulate / reduce
# --------------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig) -> Path:
    """Trajectories of the two-dimensional process, one CSV per replica and ``gamma1``."""
    sim = cfg.simulation
    rec = _recorder("simulate", cfg, "grid_index * stream_block + replica")
    fam = cfg.family()
    obs = _obs_grid(sim.horizon, sim.obs_interval)
    s0 = State2D(sim.x0, sim.y0)
    for gi, g in enumerate(cfg.gamma1_grid):
        model = fam.instantiate(g)

        def run(r, model=model, gi=gi):
            rng = RngStream(cfg.seed, gi * STREAM_BLOCK + r)
            return simulate(s0, sim.horizon, model, rng, obs_times=obs, record_jumps=sim.record_jumps)

        with rec.stage(f"simulate {gamma_label(g)}"):
            trajs = _parallel_map(run, range(sim.n_replicas), cfg.threads)
        for r, traj in enumerate(trajs):
            name = f"trajectories/{gamma_label(g)}/stream_{gi * STREAM_BLOCK + r:08d}.csv"
            rec.csv(name, ["t", "x", "y", "event"], trajectory_rows(traj, with_x=True))
    rec.extra["initial_state"] = {"x0": sim.x0, "y0": sim.y0}
    return rec.write()


def cmd_reduce(cfg: ExperimentConfig) -> Path:
    """Reduced one-dimensional dynamics: the ODE under S1, the bursting process otherwise."""
    sim = cfg.simulation
    rec = _recorder("reduce", cfg, "grid_index * stream_block + replica")
    fam = cfg.family()
    obs = _obs_grid(sim.horizon, sim.obs_interval)
    for gi, g in enumerate(cfg.gamma1_grid):
        model = fam.instantiate(g)
        if cfg.scaling == "S1":
            with rec.stage(f"ode {gamma_label(g)}"):
                ode = ReducedODE.from_model(model)
                if obs.size:
                    sol = integrate_ode(sim.y0, sim.horizon, ode, t_eval=obs)
                    rows = [(t, y, "obs") for t, y in zip(sol.t, sol.y)]
                else:
                    rows = []
            rec.csv(f"reduced/{gamma_label(g)}/ode.csv", ["t", "y", "event"], rows)
            continue
        red = ReducedJumpModel.from_model(model)

        def run(r, red=red, gi=gi):
            rng = RngStream(cfg.seed, gi * STREAM_BLOCK + r)
            return simulate_reduced(sim.y0, sim.horizon, red, rng, obs_times=obs, record_jumps=sim.record_jumps)

        with rec.stage(f"reduced {gamma_label(g)}"):
            trajs = _parallel_map(run, range(sim.n_replicas), cfg.threads)
        for r, traj in enumerate(trajs):
            name = f"reduced/{gamma_label(g)}/stream_{gi * STREAM_BLOCK + r:08d}.csv"
            rec.csv(name, ["t", "y", "event"], trajectory_rows(traj, with_x=False))
    rec.extra["reduced_kind"] = "ode" if cfg.scaling == "S1" else "bursting"
    return rec.write()


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------


def cmd_moments(cfg: ExperimentConfig) -> Path:
    """Replica-ensemble moments over the ``gamma1`` grid with fitted log-log slopes."""
    mc = cfg.moments
    rec = _recorder("moments", cfg, "streams (seed + 1000 * grid_index, 0..n_streams-1)")
    with rec.stage("moments"):
        report = fit_scaling_exponents(
            cfg.family(), cfg.gamma1_grid, k_max=mc.order, t=mc.t, seed=cfg.seed,
            n_replicas=mc.n_replicas, n_streams=mc.n_streams, threads=cfg.threads,
        )
    rec.csv("moments.csv", ["gamma1", "moment_name", "estimate", "stderr"], report.rows())
    rec.extra["t"] = report.t
    rec.extra["fitted_slopes"] = {
        k: {"slope": f.slope, "stderr": f.stderr, "ci95": list(f.ci), "kind": f.kind} for k, f in report.fits.items()
    }
    return rec.write()


# --------------------------------------------------------------------------
# density
# --------------------------------------------------------------------------


def _reference_law(red: ReducedJumpModel):
    try:
        return analytic_stationary(red)
    except UnsupportedError:
        return None


def _default_y_max(cfg: ExperimentConfig, red: ReducedJumpModel, law) -> float:
    if cfg.density.y_max is not None:
        return cfg.density.y_max
    if law is not None:
        return law.upper_quantile(cfg.density.tail)
    # no closed form: generous multiple of the largest possible mean plus burst tail
    return red.hbar.mean * (3.0 * red.rate.upper_bound / red.gamma2 + 40.0)


def cmd_density(cfg: ExperimentConfig) -> Path:
    """Finite-volume density of the reduced process, its steady state and distances to the closed form."""
    dc = cfg.density
    rec = _recorder("density", cfg, "deterministic (no random streams)")
    fam = cfg.family()
    pde_rows, steady_rows = [], []
    for g in cfg.gamma1_grid:
        red = ReducedJumpModel.from_model(fam.instantiate(g))
        law = _reference_law(red)
        y_max = _default_y_max(cfg, red, law)
        edges = uniform_edges(y_max, dc.pde_cells)
        label = gamma_label(g)
        with rec.stage(f"density {label}"):
            steady = discrete_steady_state(edges, red)
            v0 = np.zeros(dc.pde_cells)
            k = min(int(cfg.sampling.y0 / (edges[1] - edges[0])), dc.pde_cells - 1)
            v0[k] = 1.0 / (edges[1] - edges[0])
            final = solve_density_pde(DensityGrid(edges, v0), dc.pde_horizon, red)[-1]
        rec.csv(f"density/{label}/steady_fv.csv", ["y_left", "y_right", "value"], steady.rows())
        rec.csv(f"density/{label}/pde_final.csv", ["y_left", "y_right", "value"], final.rows())
        reference = steady
        if law is not None:
            rec.csv(f"density/{label}/analytic.csv", ["y_left", "y_right", "value"], law.on_grid(edges).rows())
            reference = law
            steady_rows += [(g, nm, density_distance(steady, law, nm)) for nm in NORMS]
        pde_rows += [(g, nm, density_distance(final, reference, nm)) for nm in NORMS]
    rec.csv("distances_pde.csv", ["gamma1", "norm", "value"], pde_rows)
    if steady_rows:
        rec.csv("distances_steady.csv", ["gamma1", "norm", "value"], steady_rows)
    rec.extra["pde_initial"] = f"unit mass in the cell containing y0={cfg.sampling.y0!r}"
    return rec.write()


# --------------------------------------------------------------------------
# figure reproduction
# --------------------------------------------------------------------------


def _sample_sweep(cfg: ExperimentConfig, rec: RunRecorder):
    """Stationary samples of the full model at each ``gamma1``; yields ``(g, model, x, y)``."""
    sc = cfg.sampling
    fam = cfg.family()
    counts = split_counts(sc.n_samples, sc.n_streams)
    s0 = State2D(sc.x0, sc.y0)
    settings = {}
    for gi, g in enumerate(cfg.gamma1_grid):
        model = fam.instantiate(g)
        burn_in = default_burn_in(model) if sc.burn_in is None else sc.burn_in
        window = default_window(model) if sc.window is None else sc.window
        settings[gamma_label(g)] = {"burn_in": burn_in, "window": window}

        def run(k, model=model, gi=gi, burn_in=burn_in, window=window):
            rng = RngStream(cfg.seed, gi * STREAM_BLOCK + k)
            return stationary_samples(model, counts[k], rng, burn_in=burn_in, window=window, s0=s0)

        with rec.stage(f"sampling {gamma_label(g)}"):
            parts = _parallel_map(run, [k for k in range(sc.n_streams) if counts[k] > 0], cfg.threads)
        x = np.concatenate([p.x for p in parts])
        y = np.concatenate([p.y for p in parts])
        yield g, model, x, y
    rec.extra["sampling"] = {
        "scheme": "uniform random times in [burn_in, burn_in + window] per stream",
        "n_samples": sc.n_samples,
        "n_streams": sc.n_streams,
        "initial_state": {"x0": sc.x0, "y0": sc.y0},
        "per_gamma1": settings,
    }


def _overlay(cfg: ExperimentConfig, model: Model):
    """Stationary reduced density on the Y-histogram bins (closed form when available)."""
    red = ReducedJumpModel.from_model(model)
    law = _reference_law(red)
    edges = uniform_edges(_default_y_max(cfg, red, law), cfg.density.n_bins)
    if law is not None:
        return law, law.on_grid(edges)
    return None, discrete_steady_state(edges, red)


def cmd_reproduce_fig1(cfg: ExperimentConfig) -> Path:
    """X and Y stationary histograms per ``gamma1`` with the reduced stationary density overlay."""
    rec = _recorder("reproduce-fig1", cfg, "grid_index * stream_block + stream")
    dc = cfg.density
    tails = {}
    for g, model, x, y in _sample_sweep(cfg, rec):
        label = gamma_label(g)
        _, overlay = _overlay(cfg, model)
        hy = histogram(y, dc.n_bins, y_max=float(overlay.edges[-1]))
        hx = histogram(x, dc.n_bins, y_max=float(np.quantile(x, dc.x_quantile)) or None)
        rec.csv(f"fig1/{label}/hist_x.csv", ["y_left", "y_right", "value"], hx.rows())
        rec.csv(f"fig1/{label}/hist_y.csv", ["y_left", "y_right", "value"], hy.rows())
        rec.csv(f"fig1/{label}/analytic_y.csv", ["y_left", "y_right", "value"], overlay.rows())
        tails[label] = {"x_tail_mass": hx.tail_mass, "y_tail_mass": hy.tail_mass}
    rec.extra["tail_mass"] = tails
    return rec.write()


def cmd_reproduce_fig2(cfg: ExperimentConfig) -> Path:
    """Histogram distances, Y moments and mRNA/protein moment scaling over ``gamma1``."""
    rec = _recorder("reproduce-fig2", cfg, "grid_index * stream_block + stream")
    dc = cfg.density
    dist_rows, ymom_rows, mu_rows, nu_rows = [], [], [], []
    series: dict[str, list] = {k: [] for k in ("mu1", "mu2", "nu1", "nu2")}
    for g, model, x, y in _sample_sweep(cfg, rec):
        law, overlay = _overlay(cfg, model)
        hy = histogram(y, dc.n_bins, y_max=float(overlay.edges[-1]))
        ref = law if law is not None else overlay
        dist_rows += [(g, nm, density_distance(hy, ref, nm)) for nm in NORMS]
        for k, name in ((1, "y_mean"), (2, "y_second_moment")):
            exact = law.moment(k) if law is not None else float(np.sum(overlay.centers**k * overlay.values) * overlay.dy)
            v = y**k
            ymom_rows.append((g, name, float(v.mean()), batch_means_se(v), exact))
        stats = {
            "mu1": x, "mu2": x**2, "nu1": x * y, "nu2": x**2 * y,
        }
        for name, v in stats.items():
            row = (g, name, float(v.mean()), batch_means_se(v))
            (mu_rows if name.startswith("mu") else nu_rows).append(row)
            series[name].append(row[2:])
    rec.csv("fig2/panel_a_distances.csv", ["gamma1", "norm", "value"], dist_rows)
    rec.csv("fig2/panel_b_y_moments.csv", ["gamma1", "moment_name", "estimate", "stderr", "analytic"], ymom_rows)
    rec.csv("fig2/panel_c_mu.csv", ["gamma1", "moment_name", "estimate", "stderr"], mu_rows)
    rec.csv("fig2/panel_d_nu.csv", ["gamma1", "moment_name", "estimate", "stderr"], nu_rows)
    if len(cfg.gamma1_grid) >= 2:
        slopes = {}
        for name, vals in series.items():
            est, se = zip(*vals)
            s, s_se, _ = weighted_loglog_slope(cfg.gamma1_grid, est, se)
            slopes[name] = {"slope": s, "stderr": s_se, "ci95": [s - 1.96 * s_se, s + 1.96 * s_se]}
        rec.csv(
            "fig2/slopes.csv", ["moment_name", "slope", "stderr"],
            [(k, v["slope"], v["stderr"]) for k, v in slopes.items()],
        )
        rec.extra["fitted_slopes"] = slopes
    rec.extra["moment_stderr"] = "batch means over 32 time-contiguous batches"
    return rec.write()


# --------------------------------------------------------------------------
# self check
# --------------------------------------------------------------------------


def cmd_selfcheck(flow_tol: float = 1e-10, flow_fn: Optional[FlowFn] = None, out=print) -> list[CheckResult]:
    """Run the fast invariant checks; raises :class:`CheckFailure` listing any failures."""
    results = run_selfcheck(flow_tol=flow_tol, flow_fn=flow_fn)
    for r in results:
        out(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        raise CheckFailure("failed checks: " + ", ".join(r.name for r in failed))
    return results
