"""Mixed moments ``mu_k = E[X^k]`` and ``nu_k = E[Y X^k]``.

For a constant burst rate the generator closes on these moments and gives a
linear ODE system; for a feedback rate they are estimated by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import comb

from .errors import ConfigError, NumericalError, UnsupportedError
from .model import ConstantRate, JumpDensity, Model, ModelParams, ScalingFamily
from .simulator import RngLike, State2D, _gen, ensemble, split_counts, stationary_samples

__all__ = [
    "MomentVector",
    "ScalingFit",
    "ScalingReport",
    "moment_ode_rhs",
    "integrate_moments",
    "stationary_moments",
    "sample_moments",
    "estimate_moments_mc",
    "stationary_moments_mc",
    "fit_scaling_exponents",
    "weighted_loglog_slope",
    "batch_means_se",
]


@dataclass
class MomentVector:
    """Moments at time ``t``.

    ``mu`` runs over orders ``0..K+1`` (the ``nu`` equations need
    ``mu_{K+1}``) and ``nu`` over ``0..K``.  Monte Carlo estimates carry
    standard errors in ``mu_se``/``nu_se``.
    """

    mu: np.ndarray
    nu: np.ndarray
    t: float = 0.0
    mu_se: Optional[np.ndarray] = None
    nu_se: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        return self.nu.size - 1

    @classmethod
    def zeros(cls, order: int, t: float = 0.0) -> "MomentVector":
        """Moments of the state ``X = Y = 0``."""
        mu = np.zeros(order + 2)
        mu[0] = 1.0
        return cls(mu, np.zeros(order + 1), t)

    @classmethod
    def from_state(cls, x: float, y: float, order: int, t: float = 0.0) -> "MomentVector":
        powers = float(x) ** np.arange(order + 2)
        return cls(powers, float(y) * powers[: order + 1], t)

    def as_dict(self) -> dict:
        out = {f"mu{k}": float(v) for k, v in enumerate(self.mu)}
        out.update({f"nu{k}": float(v) for k, v in enumerate(self.nu)})
        return out

    def se_dict(self) -> dict:
        if self.mu_se is None:
            return {}
        out = {f"mu{k}": float(v) for k, v in enumerate(self.mu_se)}
        out.update({f"nu{k}": float(v) for k, v in enumerate(self.nu_se)})
        return out


def _constant_phi(rate) -> float:
    if isinstance(rate, ConstantRate):
        return rate.phi0
    if isinstance(rate, (int, float)) and rate >= 0:
        return float(rate)
    raise UnsupportedError(
        "moment equations close only for a constant burst rate; use estimate_moments_mc for feedback rates"
    )


def _linear_system(order: int, p: ModelParams, phi: float, h: JumpDensity):
    """``d s/dt = M s + c`` for ``s = (mu_1..mu_{K+1}, nu_0..nu_K)``; ``mu_0 = 1`` is folded into ``c``."""
    n_mu = order + 1
    size = n_mu + order + 1
    M = np.zeros((size, size))
    c = np.zeros(size)
    E = [h.moment(j) for j in range(order + 2)]

    def mu_idx(k):
        return k - 1

    def nu_idx(k):
        return n_mu + k

    for k in range(1, order + 2):
        r = mu_idx(k)
        M[r, r] = -p.gamma1 * k
        c[r] += phi * E[k]  # i = 0 term, mu_0 = 1
        for i in range(1, k):
            M[r, mu_idx(i)] += phi * comb(k, i, exact=True) * E[k - i]
    for k in range(order + 1):
        r = nu_idx(k)
        M[r, r] = -(p.gamma1 * k + p.gamma2)
        M[r, mu_idx(k + 1)] += p.lambda2
        for i in range(k):
            M[r, nu_idx(i)] += phi * comb(k, i, exact=True) * E[k - i]
    return M, c


def _pack(m: MomentVector) -> np.ndarray:
    return np.concatenate((m.mu[1:], m.nu))


def _unpack(s: np.ndarray, order: int, t: float) -> MomentVector:
    return MomentVector(np.concatenate(([1.0], s[: order + 1])), s[order + 1 :].copy(), t)


def moment_ode_rhs(m: MomentVector, params: ModelParams, rate: Union[ConstantRate, float], jumps: JumpDensity) -> MomentVector:
    """Time derivative of every moment in ``m``; ``d mu_0/dt`` is zero."""
    phi = _constant_phi(rate)
    M, c = _linear_system(m.order, params, phi, jumps)
    d = _unpack(M @ _pack(m) + c, m.order, m.t)
    d.mu[0] = 0.0
    return d


def integrate_moments(
    m0: MomentVector,
    horizon: float,
    params: ModelParams,
    rate: Union[ConstantRate, float],
    jumps: JumpDensity,
    t_eval: Optional[Sequence[float]] = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> list[MomentVector]:
    """Integrate the closed moment system from ``m0``; returns moments at ``t_eval`` (default: horizon)."""
    phi = _constant_phi(rate)
    M, c = _linear_system(m0.order, params, phi, jumps)
    t0 = m0.t
    if t_eval is None:
        t_eval = [t0 + horizon]
    t_eval = np.asarray(t_eval, dtype=np.float64)
    sol = solve_ivp(
        lambda t, s: M @ s + c,
        (t0, t0 + horizon),
        _pack(m0),
        method="DOP853",
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise NumericalError(f"moment integration failed: {sol.message}")
    return [_unpack(sol.y[:, i], m0.order, float(t)) for i, t in enumerate(sol.t)]


def stationary_moments(order: int, params: ModelParams, rate: Union[ConstantRate, float], jumps: JumpDensity) -> MomentVector:
    """Fixed point of the closed moment system."""
    phi = _constant_phi(rate)
    M, c = _linear_system(order, params, phi, jumps)
    return _unpack(np.linalg.solve(M, -c), order, math.inf)


# --------------------------------------------------------------------------
# Monte Carlo estimators
# --------------------------------------------------------------------------


def sample_moments(x: np.ndarray, y: np.ndarray, order: int, t: float = 0.0) -> MomentVector:
    """Sample means of ``X^k`` (k <= order+1) and ``Y X^k`` (k <= order) with i.i.d. standard errors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ConfigError("need at least two samples", field="n_replicas")
    xp = x[None, :] ** np.arange(order + 2)[:, None]
    yx = y[None, :] * xp[: order + 1]
    mu, nu = xp.mean(axis=1), yx.mean(axis=1)
    mu_se = xp.std(axis=1, ddof=1) / math.sqrt(n)
    nu_se = yx.std(axis=1, ddof=1) / math.sqrt(n)
    mu[0], mu_se[0] = 1.0, 0.0
    return MomentVector(mu, nu, t, mu_se, nu_se)


def batch_means_se(values: np.ndarray, n_batches: int = 32) -> float:
    """Standard error of the mean of a correlated, time-ordered series via batch means."""
    values = np.asarray(values, dtype=np.float64)
    n_batches = min(n_batches, values.size)
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def estimate_moments_mc(
    model: Model,
    t: float,
    n_replicas: int,
    seed: int,
    order: int = 2,
    s0: State2D = State2D(0.0, 0.0),
    n_streams: int = 16,
    threads: Optional[int] = None,
) -> MomentVector:
    """Moments at absolute time ``t`` over independent replicas started at ``s0``."""
    if n_replicas < 2:
        raise ConfigError("n_replicas must be >= 2", field="n_replicas")
    states = ensemble(model, [t], n_replicas, seed, n_streams=n_streams, s0=s0, threads=threads)
    return sample_moments(states[:, 0, 0], states[:, 0, 1], order, t)


def stationary_moments_mc(
    model: Model,
    n_samples: int,
    rng: RngLike,
    order: int = 2,
    burn_in: Optional[float] = None,
    window: Optional[float] = None,
    n_batches: int = 32,
) -> MomentVector:
    """Moments from one long trajectory sampled at random times; batch-means standard errors."""
    s = stationary_samples(model, n_samples, rng, burn_in=burn_in, window=window)
    m = sample_moments(s.x, s.y, order, math.inf)
    xp = s.x[None, :] ** np.arange(order + 2)[:, None]
    m.mu_se = np.array([batch_means_se(v, n_batches) for v in xp])
    m.nu_se = np.array([batch_means_se(s.y * v, n_batches) for v in xp[: order + 1]])
    m.mu_se[0] = 0.0
    return m


# --------------------------------------------------------------------------
# scaling exponents
# --------------------------------------------------------------------------


def weighted_loglog_slope(gamma1, values, stderrs):
    """Weighted least-squares slope of ``log value`` against ``log gamma1``.

    Weights are inverse delta-method variances ``(value / stderr)^2``.
    Returns ``(slope, slope_stderr, intercept)``.
    """
    g = np.log(np.asarray(gamma1, dtype=np.float64))
    v = np.asarray(values, dtype=np.float64)
    se = np.asarray(stderrs, dtype=np.float64)
    if np.any(v <= 0):
        raise NumericalError("log-log fit needs strictly positive estimates")
    sig = np.where(se > 0, se / v, np.min(se[se > 0] / v[se > 0]) if np.any(se > 0) else 1.0)
    w = 1.0 / sig**2
    lv = np.log(v)
    gbar = np.sum(w * g) / np.sum(w)
    sxx = np.sum(w * (g - gbar) ** 2)
    slope = np.sum(w * (g - gbar) * lv) / sxx
    intercept = np.sum(w * lv) / np.sum(w) - slope * gbar
    return float(slope), float(1.0 / math.sqrt(sxx)), float(intercept)


@dataclass
class ScalingFit:
    name: str
    slope: float
    stderr: float
    ci: tuple[float, float]
    kind: str


@dataclass
class ScalingReport:
    """Monte Carlo moments over a ``gamma1`` grid and their fitted log-log slopes."""

    tag: str
    gamma1_grid: list[float]
    t: float
    estimates: list[MomentVector]
    fits: dict[str, ScalingFit] = field(default_factory=dict)

    @property
    def fitted_slopes(self) -> dict[str, float]:
        return {k: f.slope for k, f in self.fits.items()}

    def rows(self):
        """``(gamma1, moment_name, estimate, stderr)`` tuples."""
        for g, est in zip(self.gamma1_grid, self.estimates):
            se = est.se_dict()
            for name, value in est.as_dict().items():
                yield g, name, value, se.get(name, 0.0)


def fit_scaling_exponents(
    fam: ScalingFamily,
    gamma1_grid: Sequence[float],
    k_max: int = 2,
    t: Optional[float] = None,
    seed: int = 0,
    n_replicas: int = 100_000,
    n_streams: int = 16,
    threads: Optional[int] = None,
    bounded_tol: float = 0.1,
) -> ScalingReport:
    """Estimate ``mu_k`` and ``nu_k`` (``k <= k_max``) at time ``t`` for each ``gamma1`` and fit slopes.

    Each grid point uses its own seed offset so points are independent.
    A moment is classified ``"bounded"`` when its slope is within
    ``bounded_tol`` of zero and ``"power-law"`` otherwise.
    """
    grid = [float(g) for g in gamma1_grid]
    if len(grid) < 3:
        raise ConfigError("need at least 3 gamma1 values", field="gamma1_grid")
    if math.log10(max(grid) / min(grid)) < 2.0 - 1e-12:
        raise ConfigError("gamma1 grid must span at least two decades", field="gamma1_grid")
    if n_streams < 8:
        raise ConfigError("confidence intervals need at least 8 independent streams", field="n_streams")
    if t is None:
        t = 5.0 / fam.base.params.gamma2
    estimates = []
    for i, g in enumerate(grid):
        model = fam.instantiate(g)
        est = estimate_moments_mc(
            model, t, n_replicas, seed + 1000 * i, order=k_max, n_streams=n_streams, threads=threads
        )
        estimates.append(est)
    report = ScalingReport(fam.tag, grid, t, estimates)
    names = [f"mu{k}" for k in range(1, k_max + 1)] + [f"nu{k}" for k in range(k_max + 1)]
    for name in names:
        vals = [e.as_dict()[name] for e in estimates]
        ses = [e.se_dict()[name] for e in estimates]
        slope, se, _ = weighted_loglog_slope(grid, vals, ses)
        kind = "bounded" if abs(slope) < bounded_tol else "power-law"
        report.fits[name] = ScalingFit(name, slope, se, (slope - 1.96 * se, slope + 1.96 * se), kind)
    return report
