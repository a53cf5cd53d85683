"""Fast invariant checks used by ``burstpdmp selfcheck``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.integrate import solve_ivp

from . import _kernels
from .density import analytic_stationary, stationary_residual
from .model import ConstantRate, ExponentialJumps, Model, ModelParams, TabulatedRate, fig1_family
from .moments import stationary_moments
from .reduced import ReducedJumpModel
from .simulator import RngStream, State2D, simulate

FlowFn = Callable[[float, float, float, float, float, float], tuple]


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: observed {self.observed:.3e} vs threshold {self.threshold:.3e} {self.detail}".rstrip()


def flow_sweep(n_cases: int = 100, seed: int = 7):
    """Parameter sets ``(g1, g2, lam, x0, y0)`` including near-equal degradation rates."""
    rng = np.random.default_rng(seed)
    offsets = [0.0, 1e-12, 1e-6, 1.0]
    cases = []
    for i in range(n_cases):
        g2 = rng.uniform(0.1, 5.0)
        d = offsets[i % 4] if i < 80 else rng.uniform(-0.09, 5.0)
        cases.append((g2 + d, g2, rng.uniform(0.1, 5.0), rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)))
    return cases


def reference_flow(g1, g2, lam, x0, y0, dts):
    """High-order adaptive integration of the burst-free linear system."""
    sol = solve_ivp(
        lambda t, s: [-g1 * s[0], -g2 * s[1] + lam * s[0]],
        (0.0, float(dts[-1])),
        [x0, y0],
        method="DOP853",
        t_eval=dts,
        rtol=1e-13,
        atol=1e-16,
    )
    return sol.y.T


def flow_max_error(flow_fn: Optional[FlowFn] = None, n_cases: int = 100, dt_max: float = 10.0) -> float:
    flow_fn = flow_fn or _kernels.flow
    dts = np.linspace(0.0, dt_max, 41)
    worst = 0.0
    for g1, g2, lam, x0, y0 in flow_sweep(n_cases):
        ref = reference_flow(g1, g2, lam, x0, y0, dts)
        got = np.array([flow_fn(x0, y0, dt, g1, g2, lam) for dt in dts])
        worst = max(worst, float(np.abs(got - ref).max()))
    return worst


def check_flow(tol: float = 1e-10, flow_fn: Optional[FlowFn] = None) -> CheckResult:
    err = flow_max_error(flow_fn)
    return CheckResult("flow exactness", err <= tol, err, tol, "(max abs error vs DOP853, 100 cases)")


def thinning_waiting_times(phi: float, bound: float, n: int, seed: int) -> np.ndarray:
    """Inter-burst times under a constant rate ``phi`` thinned against ``bound >= phi``."""
    if bound == phi:
        rate = ConstantRate(phi)
    else:
        rate = TabulatedRate(0.0, 1.0, [phi, phi], lower_bound=phi, upper_bound=bound)
    model = Model(ModelParams(1.0, 1.0, 1.0), rate, ExponentialJumps(1.0))
    rng = RngStream(seed, 0)
    times = []
    state = State2D(0.0, 0.0)
    while len(times) < n + 1:
        horizon = 1.2 * (n + 1 - len(times)) / phi + 10.0 / phi
        traj = simulate(state, horizon, model, rng)
        times.extend(traj.times.tolist())
        state = traj.final
    jumps = np.array(times[: n + 1])
    return np.diff(np.concatenate(([0.0], jumps)))[:n]


def check_thinning(n: int = 100_000, alpha: float = 0.01, seed: int = 11) -> CheckResult:
    phi, bound = 2.0, 5.0
    waits = thinning_waiting_times(phi, bound, n, seed)
    res = stats.kstest(waits, "expon", args=(0.0, 1.0 / phi))
    return CheckResult(
        "thinning KS", bool(res.pvalue > alpha), float(res.pvalue), alpha,
        f"(p-value, {n} waits, rate {phi} thinned against {bound})",
    )


def check_moment_fixed_points(rtol: float = 1e-10) -> CheckResult:
    p = ModelParams(10.0, 1.0, 2.0)
    phi, b = 2.0, 1.0
    h = ExponentialJumps(b)
    m = stationary_moments(2, p, ConstantRate(phi), h)
    mu1 = b * phi / p.gamma1
    expected = {
        "mu1": mu1,
        "nu0": b * phi * p.lambda2 / (p.gamma1 * p.gamma2),
        "mu2": (phi * h.moment(2) + 2 * phi * b * mu1) / (2 * p.gamma1),
    }
    got = {"mu1": m.mu[1], "nu0": m.nu[0], "mu2": m.mu[2]}
    worst = max(abs(got[k] - v) / abs(v) for k, v in expected.items())
    return CheckResult("moment fixed points", worst <= rtol, worst, rtol, "(max relative error of mu1, nu0, mu2)")


def check_analytic_residual(n_points: int = 64, rel_tol: float = 1e-6) -> CheckResult:
    m = ReducedJumpModel.from_model(fig1_family().instantiate(10.0))
    law = analytic_stationary(m)
    y = np.linspace(0.0, law.upper_quantile(1e-6), n_points + 1)[1:]
    r = stationary_residual(law, m, y)
    scale = float(np.max(law.pdf(y)))
    worst = float(np.abs(r).max() / scale)
    return CheckResult("stationary law residual", worst < rel_tol, worst, rel_tol, "(max |residual| / max v)")


def run_selfcheck(flow_tol: float = 1e-10, flow_fn: Optional[FlowFn] = None) -> list[CheckResult]:
    return [
        check_flow(flow_tol, flow_fn),
        check_thinning(),
        check_moment_fixed_points(),
        check_analytic_residual(),
    ]
